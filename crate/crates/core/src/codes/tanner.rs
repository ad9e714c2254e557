use super::ParityCheckMatrix;
use crate::gf2::BitMatrix;

/// Bipartite check/variable adjacency of `H`.
///
/// Edges are numbered check-major: all edges of check 0 in ascending
/// variable order, then check 1, and so on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TannerGraph {
    n: usize,
    m: usize,
    check_offsets: Vec<usize>,
    edge_var: Vec<usize>,
    edge_check: Vec<usize>,
    var_offsets: Vec<usize>,
    var_edge_list: Vec<usize>,
}

impl TannerGraph {
    pub fn new(h: &ParityCheckMatrix) -> Self {
        let bits = h.bits();
        let (m, n) = (bits.rows(), bits.cols());
        let mut check_offsets = Vec::with_capacity(m + 1);
        let mut edge_var = Vec::new();
        let mut edge_check = Vec::new();
        check_offsets.push(0);
        for r in 0..m {
            for c in bits.row_support(r) {
                edge_var.push(c);
                edge_check.push(r);
            }
            check_offsets.push(edge_var.len());
        }
        let mut var_deg = vec![0usize; n];
        for &v in &edge_var {
            var_deg[v] += 1;
        }
        let mut var_offsets = vec![0usize; n + 1];
        for v in 0..n {
            var_offsets[v + 1] = var_offsets[v] + var_deg[v];
        }
        let mut fill = var_offsets.clone();
        let mut var_edge_list = vec![0usize; edge_var.len()];
        for (e, &v) in edge_var.iter().enumerate() {
            var_edge_list[fill[v]] = e;
            fill[v] += 1;
        }
        Self {
            n,
            m,
            check_offsets,
            edge_var,
            edge_check,
            var_offsets,
            var_edge_list,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_checks(&self) -> usize {
        self.m
    }

    pub fn num_edges(&self) -> usize {
        self.edge_var.len()
    }

    /// Edge index range of check `c`.
    pub fn check_edges(&self, c: usize) -> std::ops::Range<usize> {
        self.check_offsets[c]..self.check_offsets[c + 1]
    }

    /// Edge indices incident to variable `v`, ascending by check.
    pub fn var_edges(&self, v: usize) -> &[usize] {
        &self.var_edge_list[self.var_offsets[v]..self.var_offsets[v + 1]]
    }

    pub fn edge_var(&self) -> &[usize] {
        &self.edge_var
    }

    pub fn edge_check(&self) -> &[usize] {
        &self.edge_check
    }

    pub fn check_offsets(&self) -> &[usize] {
        &self.check_offsets
    }

    /// Variables adjacent to check `c`.
    pub fn check_neighbors(&self, c: usize) -> &[usize] {
        &self.edge_var[self.check_edges(c)]
    }

    /// Checks adjacent to variable `v`.
    pub fn var_neighbors(&self, v: usize) -> Vec<usize> {
        self.var_edges(v).iter().map(|&e| self.edge_check[e]).collect()
    }

    pub fn to_bit_matrix(&self) -> BitMatrix {
        let mut b = BitMatrix::zeros(self.m, self.n);
        for (e, &v) in self.edge_var.iter().enumerate() {
            b.set(self.edge_check[e], v, true);
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use crate::codes::tests::hamming;

    #[test]
    fn edge_count_and_round_trip() {
        let code = hamming();
        let g = code.graph();
        assert_eq!(g.num_edges(), 12);
        assert_eq!(&g.to_bit_matrix(), code.parity().bits());
    }

    #[test]
    fn adjacency_lists_are_transposes() {
        let code = hamming();
        let g = code.graph();
        for c in 0..g.num_checks() {
            for &v in g.check_neighbors(c) {
                assert!(g.var_neighbors(v).contains(&c));
            }
        }
        for v in 0..g.num_vars() {
            for c in g.var_neighbors(v) {
                assert!(g.check_neighbors(c).contains(&v));
            }
            for &e in g.var_edges(v) {
                assert_eq!(g.edge_var()[e], v);
            }
        }
    }
}
