//! Regenerates the bundled parity-check matrices under `crates/core/codes`.
//!
//! ```text
//! cargo run -p transcoder-core --example gen_codes
//! ```

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use transcoder_core::codes::{to_alist, LinearCode, ParityCheckMatrix};
use transcoder_core::gf2::BitMatrix;

/// Array LDPC code: `j x p` grid of circulants `P^(a*b)`, `p` prime.
fn array_ldpc(p: usize, j: usize) -> BitMatrix {
    let mut h = BitMatrix::zeros(j * p, p * p);
    for a in 0..j {
        for b in 0..p {
            let shift = (a * b) % p;
            for r in 0..p {
                h.set(a * p + r, b * p + (r + shift) % p, true);
            }
        }
    }
    h
}

/// Quasi-cyclic 64 x 384 matrix with circulant size 32, row weight 20 and
/// column weights 4 (128 columns) and 3 (256 columns); full rank, fewest
/// 4-cycles over a fixed number of random draws.
fn qc_384_320() -> BitMatrix {
    const Z: usize = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(384_320);
    // circulant weights per (block row, block column)
    let mut weights = [[0usize; 12]; 2];
    for bc in 0..12 {
        let (w0, w1) = match bc {
            0..=3 => (2, 2),
            4..=7 => (2, 1),
            _ => (1, 2),
        };
        weights[0][bc] = w0;
        weights[1][bc] = w1;
    }
    let mut best: Option<(usize, BitMatrix)> = None;
    for _ in 0..200 {
        let mut h = BitMatrix::zeros(2 * Z, 12 * Z);
        for (br, row) in weights.iter().enumerate() {
            for (bc, &w) in row.iter().enumerate() {
                let mut shifts: Vec<usize> = (0..Z).collect();
                shifts.shuffle(&mut rng);
                for &s in &shifts[..w] {
                    for r in 0..Z {
                        h.set(br * Z + r, bc * Z + (r + s) % Z, true);
                    }
                }
            }
        }
        if h.rank() < 2 * Z {
            continue;
        }
        let cycles = four_cycles(&h);
        if best.as_ref().is_none_or(|(c, _)| cycles < *c) {
            best = Some((cycles, h));
        }
    }
    let (cycles, h) = best.expect("no full-rank draw");
    eprintln!("qc_384_320: {cycles} four-cycles");
    h
}

fn four_cycles(h: &BitMatrix) -> usize {
    let rows: Vec<Vec<usize>> = (0..h.rows()).map(|r| h.row_support(r)).collect();
    let mut count = 0;
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            let shared = rows[a].iter().filter(|c| rows[b].binary_search(c).is_ok()).count();
            count += shared * shared.saturating_sub(1) / 2;
        }
    }
    count
}

/// Polynomials over GF(2) as bit masks, bit i = coefficient of x^i.
fn poly_mul(a: u128, b: u128) -> u128 {
    let mut out = 0;
    for i in 0..128 {
        if (b >> i) & 1 == 1 {
            out ^= a << i;
        }
    }
    out
}

fn poly_divmod(mut a: u128, b: u128) -> (u128, u128) {
    let db = 127 - b.leading_zeros();
    let mut q = 0;
    while a != 0 && 127 - a.leading_zeros() >= db {
        let s = 127 - a.leading_zeros() - db;
        q |= 1 << s;
        a ^= b << s;
    }
    (q, a)
}

/// Narrow-sense primitive BCH code of length `2^mdeg - 1` correcting `t` errors.
fn bch(mdeg: u32, prim: u128, t: usize) -> BitMatrix {
    let n = (1usize << mdeg) - 1;
    // antilog table of alpha
    let mut exp = vec![0u128; n];
    let mut x = 1u128;
    for e in exp.iter_mut() {
        *e = x;
        x <<= 1;
        if x >> mdeg & 1 == 1 {
            x ^= prim;
        }
    }
    let mut g = 1u128;
    let mut used = vec![false; n];
    for i in 1..=2 * t {
        if used[i % n] {
            continue;
        }
        // minimal polynomial of alpha^i over its cyclotomic coset
        let mut coset = vec![i % n];
        let mut j = (2 * i) % n;
        while j != i % n {
            coset.push(j);
            j = (2 * j) % n;
        }
        // polynomial with GF(2^m) coefficients, stored as element vectors
        let mut poly: Vec<u128> = vec![1];
        for &c in &coset {
            used[c] = true;
            let root = exp[c];
            let mut next = vec![0u128; poly.len() + 1];
            for (d, &coef) in poly.iter().enumerate() {
                next[d + 1] ^= coef;
                next[d] ^= gf_mul(coef, root, &exp, n);
            }
            poly = next;
        }
        let mut min = 0u128;
        for (d, &coef) in poly.iter().enumerate() {
            assert!(coef <= 1, "minimal polynomial must be binary");
            min |= coef << d;
        }
        g = poly_mul(g, min);
    }
    let xn1 = (1u128 << n) | 1;
    let (hpoly, rem) = poly_divmod(xn1, g);
    assert_eq!(rem, 0);
    let k = (127 - hpoly.leading_zeros()) as usize;
    // rows: shifts of the reciprocal of h(x)
    let mut h = BitMatrix::zeros(n - k, n);
    for r in 0..n - k {
        for d in 0..=k {
            if (hpoly >> (k - d)) & 1 == 1 {
                h.set(r, r + d, true);
            }
        }
    }
    h
}

fn gf_mul(a: u128, b: u128, exp: &[u128], n: usize) -> u128 {
    if a == 0 || b == 0 {
        return 0;
    }
    let log = |v: u128| exp.iter().position(|&e| e == v).unwrap();
    exp[(log(a) + log(b)) % n]
}

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("codes");
    std::fs::create_dir_all(&dir).unwrap();
    let hamming = BitMatrix::from_rows(&[
        [0u8, 0, 0, 1, 1, 1, 1],
        [0, 1, 1, 0, 0, 1, 1],
        [1, 0, 1, 0, 1, 0, 1],
    ]);
    let codes = [
        ("hamming_7_4", hamming),
        ("ldpc_49_24", array_ldpc(7, 4)),
        ("ldpc_121_60", array_ldpc(11, 6)),
        ("ldpc_121_70", array_ldpc(11, 5)),
        ("ldpc_121_80", array_ldpc(11, 4)),
        ("ldpc_384_320", qc_384_320()),
        ("bch_31_16", bch(5, 0b100101, 3)),
        ("bch_63_36", bch(6, 0b1000011, 5)),
        ("bch_63_45", bch(6, 0b1000011, 3)),
        ("bch_63_51", bch(6, 0b1000011, 2)),
    ];
    for (name, bits) in codes {
        let h = ParityCheckMatrix::new(bits).unwrap();
        let code = LinearCode::from_parity(name, h.clone());
        assert!(code
            .generator()
            .bits()
            .mul(&h.bits().transpose())
            .is_zero());
        println!(
            "{name}: {}x{} rank {} k {} edges {}",
            h.rows(),
            h.cols(),
            h.rank(),
            code.k(),
            code.graph().num_edges()
        );
        std::fs::write(dir.join(format!("{name}.alist")), to_alist(&h)).unwrap();
    }
}
