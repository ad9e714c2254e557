use super::CodeError;
use crate::gf2::BitMatrix;
use std::path::Path;

/// Frozen/information split of a polar code of length `N = 2^t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolarCodeSpec {
    n: usize,
    frozen: Vec<usize>,
    info: Vec<usize>,
    is_frozen: Vec<bool>,
}

impl PolarCodeSpec {
    pub fn new(n: usize, frozen: impl IntoIterator<Item = usize>) -> Result<Self, CodeError> {
        if n < 2 || !n.is_power_of_two() {
            return Err(CodeError::NotPowerOfTwo(n));
        }
        let mut is_frozen = vec![false; n];
        for f in frozen {
            if f >= n {
                return Err(CodeError::FrozenSet(format!("index {f} out of range for N = {n}")));
            }
            if is_frozen[f] {
                return Err(CodeError::FrozenSet(format!("duplicate index {f}")));
            }
            is_frozen[f] = true;
        }
        let frozen: Vec<usize> = (0..n).filter(|&i| is_frozen[i]).collect();
        let info: Vec<usize> = (0..n).filter(|&i| !is_frozen[i]).collect();
        if frozen.is_empty() || info.is_empty() {
            return Err(CodeError::FrozenSet(format!(
                "{} frozen of {n} leaves no code",
                frozen.len()
            )));
        }
        Ok(Self {
            n,
            frozen,
            info,
            is_frozen,
        })
    }

    /// Freezes the `N - k` bit channels with the largest Bhattacharyya
    /// parameter on a BPSK/AWGN channel at `design_ebn0_db`.
    pub fn bhattacharyya(n: usize, k: usize, design_ebn0_db: f64) -> Result<Self, CodeError> {
        if n < 2 || !n.is_power_of_two() {
            return Err(CodeError::NotPowerOfTwo(n));
        }
        if k == 0 || k >= n {
            return Err(CodeError::FrozenSet(format!("k = {k} invalid for N = {n}")));
        }
        let z = log_bhattacharyya(n, k as f64 / n as f64, design_ebn0_db);
        let mut order: Vec<usize> = (0..n).collect();
        // worst first; ties broken towards the lower index
        order.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
        Self::new(n, order.into_iter().take(n - k))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.info.len()
    }

    pub fn frozen(&self) -> &[usize] {
        &self.frozen
    }

    pub fn info(&self) -> &[usize] {
        &self.info
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.is_frozen[i]
    }

    pub fn frozen_mask(&self) -> &[bool] {
        &self.is_frozen
    }
}

/// `ln Z_i` for every bit channel, index read most significant bit first.
fn log_bhattacharyya(n: usize, rate: f64, ebn0_db: f64) -> Vec<f64> {
    // Z = exp(-1 / (2 sigma^2)) with sigma^2 = 1 / (2 R Eb/N0)
    let mut lz = vec![-rate * 10f64.powf(ebn0_db / 10.0)];
    while lz.len() < n {
        let mut next = Vec::with_capacity(lz.len() * 2);
        for &z in &lz {
            next.push(z + (2.0 - z.exp()).ln());
            next.push(2.0 * z);
        }
        lz = next;
    }
    lz
}

/// In-place transform by the Kronecker power of `[[1,0],[1,1]]`, bit-natural order.
pub fn polar_transform(x: &mut [u8]) {
    let n = x.len();
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for i in start..start + h {
                x[i] ^= x[i + h];
            }
        }
        h *= 2;
    }
}

pub(crate) fn kronecker_power(n: usize) -> BitMatrix {
    let mut g = BitMatrix::zeros(n, n);
    let mut row = vec![0u8; n];
    for i in 0..n {
        row.fill(0);
        row[i] = 1;
        polar_transform(&mut row);
        for (c, &b) in row.iter().enumerate() {
            if b == 1 {
                g.set(i, c, true);
            }
        }
    }
    g
}

pub fn polar_encode(spec: &PolarCodeSpec, b: &[u8]) -> Result<Vec<u8>, CodeError> {
    if b.len() != spec.k() {
        return Err(CodeError::Length {
            expected: spec.k(),
            got: b.len(),
        });
    }
    let mut u = vec![0u8; spec.n()];
    for (&i, &bit) in spec.info().iter().zip(b) {
        u[i] = bit & 1;
    }
    polar_transform(&mut u);
    Ok(u)
}

/// Reads a frozen-set file: one 0-based index per line, `#` comments allowed.
pub fn read_frozen_file(path: impl AsRef<Path>, n: usize) -> Result<PolarCodeSpec, CodeError> {
    let text = std::fs::read_to_string(path)?;
    let mut frozen = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        frozen.push(t.parse::<usize>().map_err(|_| CodeError::Parse {
            line: i + 1,
            msg: format!("bad frozen index `{t}`"),
        })?);
    }
    PolarCodeSpec::new(n, frozen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::LinearCode;
    use proptest::prelude::*;

    #[test]
    fn n2_single_kernel() {
        let spec = PolarCodeSpec::new(2, [0]).unwrap();
        assert_eq!(polar_encode(&spec, &[1]).unwrap(), vec![1, 1]);
    }

    #[test]
    fn n4_two_stages() {
        let spec = PolarCodeSpec::new(4, [0, 1]).unwrap();
        // u = [0,0,1,0]; row 2 of F (x) F is [1,0,1,0]
        assert_eq!(polar_encode(&spec, &[1, 0]).unwrap(), vec![1, 0, 1, 0]);
        assert_eq!(polar_encode(&spec, &[0, 1]).unwrap(), vec![1, 1, 1, 1]);
        assert_eq!(polar_encode(&spec, &[0, 0]).unwrap(), vec![0; 4]);
    }

    #[test]
    fn rejects_bad_lengths_and_sets() {
        assert!(matches!(PolarCodeSpec::new(6, [0]), Err(CodeError::NotPowerOfTwo(6))));
        assert!(PolarCodeSpec::new(4, [0, 0]).is_err());
        assert!(PolarCodeSpec::new(4, [4]).is_err());
        let spec = PolarCodeSpec::new(4, [0]).unwrap();
        assert!(polar_encode(&spec, &[1]).is_err());
    }

    #[test]
    fn transform_is_involution() {
        let mut x = vec![1, 0, 1, 1, 0, 0, 1, 0];
        let orig = x.clone();
        polar_transform(&mut x);
        polar_transform(&mut x);
        assert_eq!(x, orig);
    }

    #[test]
    fn bhattacharyya_freezes_known_n8_set() {
        // the textbook N = 8, k = 4 construction freezes {0,1,2,4}
        let spec = PolarCodeSpec::bhattacharyya(8, 4, 2.0).unwrap();
        assert_eq!(spec.frozen(), &[0, 1, 2, 4]);
        // channel 0 is always the worst, channel N-1 always the best
        let spec = PolarCodeSpec::bhattacharyya(128, 64, 3.0).unwrap();
        assert!(spec.is_frozen(0));
        assert!(!spec.is_frozen(127));
    }

    #[test]
    fn polar_linear_code_matrices_consistent() {
        let spec = PolarCodeSpec::bhattacharyya(16, 7, 1.0).unwrap();
        let code = LinearCode::polar("p", spec);
        assert!(code
            .generator()
            .bits()
            .mul(&code.parity().bits().transpose())
            .is_zero());
        assert_eq!(code.k(), 7);
        assert_eq!(code.parity().rank(), 9);
    }

    #[test]
    fn frozen_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.txt");
        std::fs::write(&p, "# frozen\n0\n1\n\n2\n4\n").unwrap();
        let spec = read_frozen_file(&p, 8).unwrap();
        assert_eq!(spec.info(), &[3, 5, 6, 7]);
        std::fs::write(&p, "0\nx\n").unwrap();
        assert!(matches!(read_frozen_file(&p, 8), Err(CodeError::Parse { line: 2, .. })));
    }

    proptest! {
        #[test]
        fn polar_encode_is_linear(a in proptest::collection::vec(0u8..2, 32), b in proptest::collection::vec(0u8..2, 32)) {
            let spec = PolarCodeSpec::bhattacharyya(64, 32, 2.0).unwrap();
            let ab: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
            let ca = polar_encode(&spec, &a).unwrap();
            let cb = polar_encode(&spec, &b).unwrap();
            let cab = polar_encode(&spec, &ab).unwrap();
            let sum: Vec<u8> = ca.iter().zip(&cb).map(|(x, y)| x ^ y).collect();
            prop_assert_eq!(cab, sum);
        }
    }
}
