//! Binary linear block codes: parity-check and generator matrices, the Tanner
//! graph, polar constructions and the bundled code registry.

mod alist;
mod polar;
mod registry;
mod tanner;

pub use alist::{load_alist, parse_alist, to_alist};
pub use polar::{polar_encode, polar_transform, read_frozen_file, PolarCodeSpec};
pub use registry::{load_code, BUNDLED_CODES, DEFAULT_POLAR_DESIGN_EBN0_DB};
pub use tanner::TannerGraph;

use crate::gf2::BitMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum CodeError {
    #[error("alist parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("parity-check row {0} is all zeros")]
    ZeroRow(usize),
    #[error("degenerate code: n = {n}, rank(H) = {rank}")]
    Degenerate { n: usize, rank: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("polar block length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("invalid frozen set: {0}")]
    FrozenSet(String),
    #[error("unknown code `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parity-check matrix `H`. Rows are nonzero; redundant (linearly dependent)
/// rows are kept, as BP benefits from them, and the code dimension is
/// `n - rank(H)`.
#[derive(Clone, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    bits: BitMatrix,
    rank: usize,
}

impl ParityCheckMatrix {
    pub fn new(bits: BitMatrix) -> Result<Self, CodeError> {
        if let Some(r) = (0..bits.rows()).find(|&r| bits.row_weight(r) == 0) {
            return Err(CodeError::ZeroRow(r));
        }
        let rank = bits.rank();
        if rank == 0 || rank >= bits.cols() {
            return Err(CodeError::Degenerate {
                n: bits.cols(),
                rank,
            });
        }
        Ok(Self { bits, rank })
    }

    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self, CodeError> {
        Self::new(BitMatrix::from_rows(rows))
    }

    pub fn rows(&self) -> usize {
        self.bits.rows()
    }

    pub fn cols(&self) -> usize {
        self.bits.cols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.rows()
    }

    pub fn bits(&self) -> &BitMatrix {
        &self.bits
    }

    pub fn row_weights(&self) -> Vec<usize> {
        (0..self.rows()).map(|r| self.bits.row_weight(r)).collect()
    }

    pub fn col_weights(&self) -> Vec<usize> {
        (0..self.cols()).map(|c| self.bits.col_weight(c)).collect()
    }
}

impl fmt::Debug for ParityCheckMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H(rank {}) {:?}", self.rank, self.bits)
    }
}

/// Generator matrix `G` (k x n, full row rank).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorMatrix {
    bits: BitMatrix,
}

impl GeneratorMatrix {
    pub fn rows(&self) -> usize {
        self.bits.rows()
    }

    pub fn cols(&self) -> usize {
        self.bits.cols()
    }

    pub fn bits(&self) -> &BitMatrix {
        &self.bits
    }
}

/// Derives a generator matrix from `H` by GF(2) elimination.
///
/// The returned `G` is systematic on the non-pivot columns of the reduced
/// `H`, listed in the second return value in ascending order. No column
/// permutation is applied, so `G` is in the original column order.
pub fn generator_from_parity(h: &ParityCheckMatrix) -> (GeneratorMatrix, Vec<usize>) {
    let (reduced, pivots) = h.bits.rref();
    let n = h.cols();
    let mut is_pivot = vec![false; n];
    for &p in &pivots {
        is_pivot[p] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let mut g = BitMatrix::zeros(free.len(), n);
    for (row, &f) in free.iter().enumerate() {
        g.set(row, f, true);
        for (i, &p) in pivots.iter().enumerate() {
            if reduced.get(i, f) {
                g.set(row, p, true);
            }
        }
    }
    (GeneratorMatrix { bits: g }, free)
}

#[derive(Clone, Debug)]
enum Encoding {
    /// `c = bG` with `b` readable at `info_positions` of `c`.
    Systematic { info_positions: Vec<usize> },
    Polar(PolarCodeSpec),
}

/// A binary linear block code C(n, k) with its matrices and Tanner graph.
#[derive(Clone, Debug)]
pub struct LinearCode {
    name: String,
    h: ParityCheckMatrix,
    g: GeneratorMatrix,
    graph: TannerGraph,
    encoding: Encoding,
}

impl LinearCode {
    pub fn from_parity(name: impl Into<String>, h: ParityCheckMatrix) -> Self {
        let (g, info_positions) = generator_from_parity(&h);
        let graph = TannerGraph::new(&h);
        Self {
            name: name.into(),
            h,
            g,
            graph,
            encoding: Encoding::Systematic { info_positions },
        }
    }

    /// Polar code as a linear code: `G` holds the information rows of the
    /// Kronecker power, `H` the transposed frozen columns.
    pub fn polar(name: impl Into<String>, spec: PolarCodeSpec) -> Self {
        let kernel = polar::kronecker_power(spec.n());
        let mut g = BitMatrix::zeros(spec.k(), spec.n());
        for (row, &i) in spec.info().iter().enumerate() {
            for c in kernel.row_support(i) {
                g.set(row, c, true);
            }
        }
        let mut h = BitMatrix::zeros(spec.frozen().len(), spec.n());
        for (row, &f) in spec.frozen().iter().enumerate() {
            for c in 0..spec.n() {
                if kernel.get(c, f) {
                    h.set(row, c, true);
                }
            }
        }
        let h = ParityCheckMatrix::new(h).expect("polar parity checks are independent");
        let graph = TannerGraph::new(&h);
        Self {
            name: name.into(),
            h,
            g: GeneratorMatrix { bits: g },
            graph,
            encoding: Encoding::Polar(spec),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.h.cols()
    }

    pub fn k(&self) -> usize {
        self.g.rows()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n() as f64
    }

    pub fn parity(&self) -> &ParityCheckMatrix {
        &self.h
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.g
    }

    pub fn graph(&self) -> &TannerGraph {
        &self.graph
    }

    pub fn polar_spec(&self) -> Option<&PolarCodeSpec> {
        match &self.encoding {
            Encoding::Polar(s) => Some(s),
            Encoding::Systematic { .. } => None,
        }
    }

    pub fn encode(&self, b: &[u8]) -> Result<Vec<u8>, CodeError> {
        if b.len() != self.k() {
            return Err(CodeError::Length {
                expected: self.k(),
                got: b.len(),
            });
        }
        match &self.encoding {
            Encoding::Polar(spec) => polar_encode(spec, b),
            Encoding::Systematic { .. } => Ok(self.g.bits.vec_mul(b)),
        }
    }

    pub fn syndrome(&self, c_hat: &[u8]) -> Result<Vec<u8>, CodeError> {
        if c_hat.len() != self.n() {
            return Err(CodeError::Length {
                expected: self.n(),
                got: c_hat.len(),
            });
        }
        Ok(self.h.bits.mul_vec(c_hat))
    }

    pub fn is_codeword(&self, c_hat: &[u8]) -> bool {
        self.syndrome(c_hat).is_ok_and(|s| s.iter().all(|&b| b == 0))
    }

    /// Recovers the message from a codeword estimate.
    pub fn message_of(&self, c_hat: &[u8]) -> Vec<u8> {
        match &self.encoding {
            Encoding::Systematic { info_positions } => {
                info_positions.iter().map(|&i| c_hat[i]).collect()
            }
            Encoding::Polar(spec) => {
                // the polar transform is an involution
                let mut u = c_hat.to_vec();
                polar_transform(&mut u);
                spec.info().iter().map(|&i| u[i]).collect()
            }
        }
    }
}

/// Codewords of a code: every codeword when `2^k <= cap`, otherwise `cap`
/// codewords of uniformly random messages.
pub fn enumerate_codewords(code: &LinearCode, cap: usize, seed: u64) -> Codewords<'_> {
    let k = code.k();
    let exhaustive = k < usize::BITS as usize && (1usize << k) <= cap;
    Codewords {
        code,
        next: 0,
        total: if exhaustive { 1usize << k } else { cap },
        rng: (!exhaustive).then(|| ChaCha8Rng::seed_from_u64(seed)),
    }
}

pub struct Codewords<'a> {
    code: &'a LinearCode,
    next: usize,
    total: usize,
    rng: Option<ChaCha8Rng>,
}

impl Codewords<'_> {
    pub fn is_exhaustive(&self) -> bool {
        self.rng.is_none()
    }
}

impl Iterator for Codewords<'_> {
    type Item = Vec<u8>;

    fn next(&mut self) -> Option<Vec<u8>> {
        if self.next == self.total {
            return None;
        }
        let k = self.code.k();
        let msg: Vec<u8> = match &mut self.rng {
            // message bit j is bit (k-1-j) of the counter
            None => (0..k).map(|j| ((self.next >> (k - 1 - j)) & 1) as u8).collect(),
            Some(rng) => (0..k).map(|_| rng.random::<bool>() as u8).collect(),
        };
        self.next += 1;
        Some(self.code.encode(&msg).expect("message length is k"))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.total - self.next;
        (left, Some(left))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn hamming() -> LinearCode {
        let h = ParityCheckMatrix::from_rows(&[
            [0u8, 0, 0, 1, 1, 1, 1],
            [0, 1, 1, 0, 0, 1, 1],
            [1, 0, 1, 0, 1, 0, 1],
        ])
        .unwrap();
        LinearCode::from_parity("hamming_7_4", h)
    }

    #[test]
    fn hamming_generator_is_orthogonal_with_rank_4() {
        let code = hamming();
        let g = code.generator().bits();
        assert!(g.mul(&code.parity().bits().transpose()).is_zero());
        assert_eq!(g.rank(), 4);
        assert_eq!(code.k(), 4);
    }

    #[test]
    fn repetition_generator() {
        let code = LinearCode::from_parity("rep", ParityCheckMatrix::from_rows(&[[1u8, 1]]).unwrap());
        assert_eq!(code.generator().bits().row_bits(0), vec![1, 1]);
        assert_eq!(code.encode(&[1]).unwrap(), vec![1, 1]);
    }

    #[test]
    fn all_zero_message_encodes_to_zero() {
        let code = hamming();
        assert_eq!(code.encode(&[0; 4]).unwrap(), vec![0; 7]);
    }

    #[test]
    fn syndrome_zero_for_all_messages_and_membership_exact() {
        let code = hamming();
        let words: Vec<Vec<u8>> = enumerate_codewords(&code, 1 << 16, 0).collect();
        assert_eq!(words.len(), 16);
        for w in &words {
            assert!(code.syndrome(w).unwrap().iter().all(|&b| b == 0));
        }
        // exhaustive over all 2^7 words: syndrome zero iff in the codeword list
        for x in 0..128u32 {
            let v: Vec<u8> = (0..7).map(|i| ((x >> i) & 1) as u8).collect();
            let zero = code.syndrome(&v).unwrap().iter().all(|&b| b == 0);
            assert_eq!(zero, words.contains(&v));
        }
    }

    #[test]
    fn flipped_bit_syndrome_is_column_of_h() {
        let code = hamming();
        let mut c = code.encode(&[1, 0, 1, 1]).unwrap();
        c[4] ^= 1;
        let s = code.syndrome(&c).unwrap();
        let col: Vec<u8> = (0..3).map(|r| code.parity().bits().get(r, 4) as u8).collect();
        assert_eq!(s, col);
    }

    #[test]
    fn length_mismatch_errors() {
        let code = hamming();
        assert!(matches!(code.encode(&[1, 0]), Err(CodeError::Length { .. })));
        assert!(matches!(code.syndrome(&[0; 6]), Err(CodeError::Length { .. })));
    }

    #[test]
    fn message_recovery_round_trips() {
        let code = hamming();
        for x in 0..16u8 {
            let b: Vec<u8> = (0..4).map(|i| (x >> i) & 1).collect();
            assert_eq!(code.message_of(&code.encode(&b).unwrap()), b);
        }
    }

    #[test]
    fn sampling_mode_returns_requested_count() {
        let code = hamming();
        let it = enumerate_codewords(&code, 5, 3);
        assert!(!it.is_exhaustive());
        let words: Vec<_> = it.collect();
        assert_eq!(words.len(), 5);
        assert!(words.iter().all(|w| code.is_codeword(w)));
    }

    #[test]
    fn zero_row_rejected() {
        let err = ParityCheckMatrix::from_rows(&[[1u8, 1, 0], [0, 0, 0]]).unwrap_err();
        assert!(matches!(err, CodeError::ZeroRow(1)));
    }

    #[test]
    fn redundant_rows_lower_dimension_only_by_rank() {
        let h = ParityCheckMatrix::from_rows(&[[1u8, 1, 0, 0], [0, 1, 1, 0], [1, 0, 1, 0], [0, 0, 1, 1]])
            .unwrap();
        assert_eq!(h.rank(), 3);
        assert!(!h.is_full_rank());
        let code = LinearCode::from_parity("r", h);
        assert_eq!(code.k(), 1);
        assert_eq!(code.encode(&[1]).unwrap(), vec![1, 1, 1, 1]);
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

        fn random_full_rank_h(seed: u64) -> BitMatrix {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            loop {
                let mut m = BitMatrix::zeros(10, 20);
                for r in 0..10 {
                    for c in 0..20 {
                        m.set(r, c, rng.random::<bool>());
                    }
                }
                if m.rank() == 10 {
                    return m;
                }
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn random_h_generator_orthogonal(seed in any::<u64>()) {
                let h = ParityCheckMatrix::new(random_full_rank_h(seed)).unwrap();
                let (g, _) = generator_from_parity(&h);
                prop_assert!(g.bits().mul(&h.bits().transpose()).is_zero());
                prop_assert_eq!(g.bits().rank(), 10);
            }

            #[test]
            fn encode_lands_in_code(seed in any::<u64>(), msg in proptest::collection::vec(0u8..2, 10)) {
                let code = LinearCode::from_parity("rand", ParityCheckMatrix::new(random_full_rank_h(seed)).unwrap());
                let c = code.encode(&msg).unwrap();
                prop_assert!(code.is_codeword(&c));
                prop_assert_eq!(code.message_of(&c), msg);
            }
        }
    }
}
