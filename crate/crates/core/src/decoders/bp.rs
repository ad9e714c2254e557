use super::DecodeError;
use crate::channel::clamp_llr;
use crate::codes::TannerGraph;

/// Bound on `|prod tanh|` before `atanh`.
pub(crate) const ATANH_CLAMP: f64 = 1.0 - 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BpVariant {
    SumProduct,
    MinSum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpConfig {
    pub iterations: usize,
    pub variant: BpVariant,
    pub early_stop: bool,
}

impl BpConfig {
    pub fn sum_product(iterations: usize) -> Self {
        Self {
            iterations,
            variant: BpVariant::SumProduct,
            early_stop: false,
        }
    }

    pub fn with_early_stop(mut self, on: bool) -> Self {
        self.early_stop = on;
        self
    }
}

/// Extrinsic check-node outputs `2 atanh(prod_{j != i} tanh(m_j / 2))`.
///
/// Products exclude each edge through prefix/suffix sweeps, so a zero
/// input does not poison the other outputs.
pub fn check_update_sum_product(inputs: &[f64], out: &mut [f64]) {
    let d = inputs.len();
    debug_assert_eq!(out.len(), d);
    // out doubles as the prefix buffer
    let mut acc = 1.0;
    for i in 0..d {
        out[i] = acc;
        acc *= (clamp_llr(inputs[i]) * 0.5).tanh();
    }
    let mut suffix = 1.0;
    for i in (0..d).rev() {
        let p = (out[i] * suffix).clamp(-ATANH_CLAMP, ATANH_CLAMP);
        out[i] = clamp_llr(2.0 * p.atanh());
        suffix *= (clamp_llr(inputs[i]) * 0.5).tanh();
    }
}

/// Min-sum check update, `sign(0) = +1`.
pub fn check_update_min_sum(inputs: &[f64], out: &mut [f64]) {
    let mut neg = false;
    let (mut min1, mut min2, mut arg) = (f64::INFINITY, f64::INFINITY, usize::MAX);
    for (i, &m) in inputs.iter().enumerate() {
        let m = clamp_llr(m);
        neg ^= m < 0.0;
        let a = m.abs();
        if a < min1 {
            min2 = min1;
            min1 = a;
            arg = i;
        } else if a < min2 {
            min2 = a;
        }
    }
    for (i, (o, &m)) in out.iter_mut().zip(inputs).enumerate() {
        let mag = if i == arg { min2 } else { min1 };
        let s = neg ^ (clamp_llr(m) < 0.0);
        *o = if s { -mag } else { mag };
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpOutput {
    /// Posterior LLRs, channel plus all check messages.
    pub posterior: Vec<f64>,
    pub iterations_run: usize,
    /// Posterior after each iteration, when requested.
    pub trace: Vec<Vec<f64>>,
}

/// Flooding BP with reusable message buffers.
pub struct BpDecoder<'a> {
    graph: &'a TannerGraph,
    cfg: BpConfig,
    v2c: Vec<f64>,
    c2v: Vec<f64>,
    total: Vec<f64>,
    posterior: Vec<f64>,
    iterations_run: usize,
}

impl<'a> BpDecoder<'a> {
    pub fn new(graph: &'a TannerGraph, cfg: BpConfig) -> Result<Self, DecodeError> {
        if cfg.iterations == 0 {
            return Err(DecodeError::Config("BP needs at least one iteration".into()));
        }
        let e = graph.num_edges();
        Ok(Self {
            graph,
            cfg,
            v2c: vec![0.0; e],
            c2v: vec![0.0; e],
            total: vec![0.0; graph.num_vars()],
            posterior: vec![0.0; graph.num_vars()],
            iterations_run: 0,
        })
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    pub fn decode(&mut self, llr: &[f64]) -> Result<&[f64], DecodeError> {
        self.run(llr, None)?;
        Ok(&self.posterior)
    }

    fn run(&mut self, llr: &[f64], mut trace: Option<&mut Vec<Vec<f64>>>) -> Result<(), DecodeError> {
        let g = self.graph;
        let n = g.num_vars();
        if llr.len() != n {
            return Err(DecodeError::Length {
                expected: n,
                got: llr.len(),
            });
        }
        let ev = g.edge_var();
        for (m, &v) in self.v2c.iter_mut().zip(ev) {
            *m = llr[v];
        }
        self.iterations_run = 0;
        for _ in 0..self.cfg.iterations {
            for c in 0..g.num_checks() {
                let r = g.check_edges(c);
                let (inp, out) = (&self.v2c[r.clone()], &mut self.c2v[r]);
                match self.cfg.variant {
                    BpVariant::SumProduct => check_update_sum_product(inp, out),
                    BpVariant::MinSum => check_update_min_sum(inp, out),
                }
            }
            self.total.fill(0.0);
            for (&m, &v) in self.c2v.iter().zip(ev) {
                self.total[v] += m;
            }
            for v in 0..n {
                self.posterior[v] = clamp_llr(llr[v] + self.total[v]);
            }
            for (e, &v) in ev.iter().enumerate() {
                self.v2c[e] = (llr[v] + self.total[v]) - self.c2v[e];
            }
            self.iterations_run += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.posterior.clone());
            }
            if self.cfg.early_stop && self.syndrome_zero() {
                break;
            }
        }
        Ok(())
    }

    fn syndrome_zero(&self) -> bool {
        let g = self.graph;
        (0..g.num_checks()).all(|c| {
            g.check_neighbors(c)
                .iter()
                .filter(|&&v| self.posterior[v] < 0.0)
                .count()
                % 2
                == 0
        })
    }
}

/// One-shot BP; `trace` keeps the posterior of every iteration.
pub fn bp_decode(graph: &TannerGraph, llr: &[f64], cfg: &BpConfig, trace: bool) -> Result<BpOutput, DecodeError> {
    let mut dec = BpDecoder::new(graph, cfg.clone())?;
    let mut t = Vec::new();
    dec.run(llr, trace.then_some(&mut t))?;
    Ok(BpOutput {
        posterior: dec.posterior,
        iterations_run: dec.iterations_run,
        trace: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoders::hard_decision;
    use crate::channel::{add_noise, bpsk_map, llr_from_samples, sigma_from_ebn0};
    use crate::codes::{load_code, LinearCode, ParityCheckMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spc3() -> LinearCode {
        LinearCode::from_parity("spc3", ParityCheckMatrix::from_rows(&[[1u8, 1, 1]]).unwrap())
    }

    /// Exact bitwise MAP LLRs by enumerating the codebook.
    fn map_oracle(code: &LinearCode, llr: &[f64]) -> Vec<f64> {
        let words: Vec<Vec<u8>> = crate::codes::enumerate_codewords(code, 1 << 20, 0).collect();
        (0..code.n())
            .map(|i| {
                let (mut p0, mut p1) = (0.0, 0.0);
                for w in &words {
                    // P(y | c) up to a constant: exp(sum over ones of -l_j)
                    let lik: f64 = w.iter().zip(llr).map(|(&b, &l)| if b == 1 { -l } else { 0.0 }).sum::<f64>().exp();
                    if w[i] == 0 {
                        p0 += lik
                    } else {
                        p1 += lik
                    }
                }
                (p0 / p1).ln()
            })
            .collect()
    }

    #[test]
    fn spc_one_iteration_is_map() {
        let code = spc3();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let mut y = bpsk_map(&[0, 1, 1]);
            add_noise(&mut y, 0.9, &mut rng).unwrap();
            let llr = llr_from_samples(&y, 0.9);
            let out = bp_decode(code.graph(), &llr, &BpConfig::sum_product(1), false).unwrap();
            for (a, b) in out.posterior.iter().zip(map_oracle(&code, &llr)) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn repetition_code_is_map_for_many_iterations() {
        let code = LinearCode::from_parity(
            "rep3",
            ParityCheckMatrix::from_rows(&[[1u8, 1, 0], [0, 1, 1]]).unwrap(),
        );
        let llr = [0.7, -1.3, 0.4];
        let out = bp_decode(code.graph(), &llr, &BpConfig::sum_product(5), false).unwrap();
        for (a, b) in out.posterior.iter().zip(map_oracle(&code, &llr)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_input_gives_zero_posterior() {
        let code = load_code("ldpc_49_24").unwrap();
        let out = bp_decode(code.graph(), &[0.0; 49], &BpConfig::sum_product(5), false).unwrap();
        assert!(out.posterior.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn confident_codeword_unchanged() {
        let code = load_code("ldpc_49_24").unwrap();
        let c = code.encode(&[1; 24]).unwrap();
        let llr: Vec<f64> = c.iter().map(|&b| if b == 1 { -15.0 } else { 15.0 }).collect();
        let out = bp_decode(code.graph(), &llr, &BpConfig::sum_product(1), false).unwrap();
        assert_eq!(hard_decision(&out.posterior), c);
        assert!(code.is_codeword(&hard_decision(&out.posterior)));
    }

    #[test]
    fn sign_equivariance_on_even_degree_checks() {
        // negating every input flips all outputs only when each check has even degree
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for name in ["hamming_7_4", "ldpc_384_320"] {
            let code = load_code(name).unwrap();
            let sigma = sigma_from_ebn0(3.0, code.rate());
            for variant in [BpVariant::SumProduct, BpVariant::MinSum] {
                let cfg = BpConfig { iterations: 10, variant, early_stop: false };
                for _ in 0..20 {
                    let mut y = vec![-1.0; code.n()];
                    add_noise(&mut y, sigma, &mut rng).unwrap();
                    let llr = llr_from_samples(&y, sigma);
                    let neg: Vec<f64> = llr.iter().map(|v| -v).collect();
                    let a = bp_decode(code.graph(), &llr, &cfg, false).unwrap().posterior;
                    let b = bp_decode(code.graph(), &neg, &cfg, false).unwrap().posterior;
                    for (x, y) in a.iter().zip(&b) {
                        assert!((x + y).abs() < 1e-9, "{name} {variant:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn length_and_config_errors() {
        let code = spc3();
        assert!(matches!(
            bp_decode(code.graph(), &[0.0; 2], &BpConfig::sum_product(1), false),
            Err(DecodeError::Length { .. })
        ));
        assert!(BpDecoder::new(code.graph(), BpConfig::sum_product(0)).is_err());
    }

    #[test]
    fn min_sum_check_matches_hand_values() {
        let mut out = [0.0; 3];
        check_update_min_sum(&[1.0, -2.0, 3.0], &mut out);
        assert_eq!(out, [-2.0, 1.0, -1.0]);
        check_update_min_sum(&[0.0, -2.0, 3.0], &mut out);
        assert_eq!(out, [-2.0, 0.0, -0.0]);
    }

    #[test]
    fn trace_has_one_entry_per_iteration() {
        let code = load_code("hamming_7_4").unwrap();
        let out = bp_decode(code.graph(), &[1.0, -0.5, 0.3, 2.0, -1.0, 0.2, 0.9], &BpConfig::sum_product(4), true).unwrap();
        assert_eq!(out.trace.len(), 4);
        assert_eq!(out.trace[3], out.posterior);
    }

    #[test]
    fn early_stop_hard_decisions_match_full_run() {
        let code = load_code("ldpc_49_24").unwrap();
        let sigma = sigma_from_ebn0(4.0, code.rate());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let full = BpConfig::sum_product(20);
        let early = full.clone().with_early_stop(true);
        let mut triggered = 0;
        for _ in 0..2000 {
            let mut y = vec![-1.0; 49];
            add_noise(&mut y, sigma, &mut rng).unwrap();
            let llr = llr_from_samples(&y, sigma);
            let a = bp_decode(code.graph(), &llr, &early, false).unwrap();
            let b = bp_decode(code.graph(), &llr, &full, false).unwrap();
            if a.iterations_run < 20 {
                triggered += 1;
                assert_eq!(hard_decision(&a.posterior), hard_decision(&b.posterior));
            }
        }
        assert!(triggered > 1000);
    }
}
