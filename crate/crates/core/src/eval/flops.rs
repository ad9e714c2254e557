//! Multiplication/addition counts of BP, the block-attention modules and
//! two full-length transformer decoders.

use crate::codes::LinearCode;

/// Sizes entering the cost formulas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlopParams {
    pub n: u64,
    /// Number of parity checks (rows of `H`).
    pub n_pc: u64,
    /// Tanner graph edges.
    pub edges: u64,
    pub m: u64,
    pub d_model: u64,
    /// Embedding width of the full-length transformers.
    pub d_cm: u64,
    pub heads: u64,
}

impl FlopParams {
    pub fn for_code(code: &LinearCode, m: usize, d_model: usize) -> Self {
        Self {
            n: code.n() as u64,
            n_pc: code.parity().rows() as u64,
            edges: code.graph().num_edges() as u64,
            m: m as u64,
            d_model: d_model as u64,
            d_cm: 128,
            heads: 8,
        }
    }

    pub fn n_b(&self) -> u64 {
        self.n.div_ceil(self.m)
    }
}

pub const TRANSCODER_ENCODER_LAYERS: u64 = 2;
pub const TRANSCODER_DECODER_LAYERS: u64 = 3;
pub const FULL_TRANSFORMER_LAYERS: u64 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlopTarget {
    Bp { iterations: u64 },
    TranscoderLayer,
    TranscoderEmbedding,
    TranscoderEncoder,
    /// Also the refinement decoder.
    TranscoderDecoder,
    CrossMptLayer,
    CrossMptEmbedding,
    CrossMptDecoder,
    EcctLayer,
    EcctEmbedding,
    EcctDecoder,
}

impl FlopTarget {
    pub const TABLE: [FlopTarget; 12] = [
        FlopTarget::Bp { iterations: 1 },
        FlopTarget::Bp { iterations: 50 },
        FlopTarget::TranscoderLayer,
        FlopTarget::TranscoderEmbedding,
        FlopTarget::TranscoderEncoder,
        FlopTarget::TranscoderDecoder,
        FlopTarget::CrossMptLayer,
        FlopTarget::CrossMptEmbedding,
        FlopTarget::CrossMptDecoder,
        FlopTarget::EcctLayer,
        FlopTarget::EcctEmbedding,
        FlopTarget::EcctDecoder,
    ];

    pub fn label(&self) -> String {
        match self {
            FlopTarget::Bp { iterations } => format!("bp x{iterations}"),
            FlopTarget::TranscoderLayer => "transcoder layer".into(),
            FlopTarget::TranscoderEmbedding => "transcoder FE+embedding".into(),
            FlopTarget::TranscoderEncoder => "transcoder encoder".into(),
            FlopTarget::TranscoderDecoder => "transcoder decoder".into(),
            FlopTarget::CrossMptLayer => "crossmpt layer".into(),
            FlopTarget::CrossMptEmbedding => "crossmpt final embedding".into(),
            FlopTarget::CrossMptDecoder => "crossmpt decoder".into(),
            FlopTarget::EcctLayer => "ecct layer".into(),
            FlopTarget::EcctEmbedding => "ecct final embedding".into(),
            FlopTarget::EcctDecoder => "ecct decoder".into(),
        }
    }
}

pub fn flop_estimate(target: FlopTarget, p: &FlopParams) -> u64 {
    let (n, npc, d, dc, h) = (p.n, p.n_pc, p.d_model, p.d_cm, p.heads);
    let nb = p.n_b();
    let tc_layer = 12 * nb * d * d + nb * nb * d + 2 * nb * nb;
    let tc_emb = 12 * nb * d * d + 3 * p.m * nb * d;
    let cm_layer = (11 * n + 13 * npc) * dc * dc + 4 * npc * n * (dc + h);
    let cm_emb = n * (n + npc);
    let ec_layer = 12 * (n + npc) * dc * dc + 2 * (n + npc) * (n + npc) * (dc + h);
    let ec_emb = (n + npc) * (n + npc);
    match target {
        FlopTarget::Bp { iterations } => iterations * p.edges,
        FlopTarget::TranscoderLayer => tc_layer,
        FlopTarget::TranscoderEmbedding => tc_emb,
        FlopTarget::TranscoderEncoder => TRANSCODER_ENCODER_LAYERS * tc_layer + tc_emb,
        FlopTarget::TranscoderDecoder => TRANSCODER_DECODER_LAYERS * tc_layer + tc_emb,
        FlopTarget::CrossMptLayer => cm_layer,
        FlopTarget::CrossMptEmbedding => cm_emb,
        FlopTarget::CrossMptDecoder => FULL_TRANSFORMER_LAYERS * cm_layer + cm_emb,
        FlopTarget::EcctLayer => ec_layer,
        FlopTarget::EcctEmbedding => ec_emb,
        FlopTarget::EcctDecoder => FULL_TRANSFORMER_LAYERS * ec_layer + ec_emb,
    }
}

/// Short form with a `k` or `M` suffix: two or three significant digits
/// (one decimal below ten units), plain integers below a thousand.
pub fn compact(x: u64) -> String {
    let (v, unit) = match x {
        0..1000 => return x.to_string(),
        1000..999_500 => (x as f64 / 1e3, "k"),
        _ => (x as f64 / 1e6, "M"),
    };
    if v < 9.95 {
        format!("{v:.1}{unit}")
    } else {
        format!("{v:.0}{unit}")
    }
}

/// Whether `shown` (as produced by [`compact`] or a plain integer) is `x`
/// rounded or truncated to its last displayed digit.
pub fn agrees_with_display(x: u64, shown: &str) -> bool {
    let shown = shown.trim();
    let (body, unit) = match shown.strip_suffix('k') {
        Some(b) => (b, 1e3),
        None => match shown.strip_suffix('M') {
            Some(b) => (b, 1e6),
            None => (shown, 1.0),
        },
    };
    let Ok(v) = body.parse::<f64>() else {
        return false;
    };
    let decimals = body.split_once('.').map_or(0, |(_, f)| f.len());
    let ulp = unit / 10f64.powi(decimals as i32);
    let (x, v) = (x as f64, v * unit);
    (x - v).abs() <= ulp / 2.0 || (0.0..ulp).contains(&(x - v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> FlopParams {
        FlopParams {
            n: 10,
            n_pc: 4,
            edges: 20,
            m: 3,
            d_model: 2,
            d_cm: 4,
            heads: 2,
        }
    }

    #[test]
    fn formulas_by_hand() {
        let p = toy();
        assert_eq!(p.n_b(), 4);
        assert_eq!(flop_estimate(FlopTarget::Bp { iterations: 3 }, &p), 60);
        // 12*4*4 + 16*2 + 2*16
        assert_eq!(flop_estimate(FlopTarget::TranscoderLayer, &p), 256);
        // 12*4*4 + 3*3*4*2
        assert_eq!(flop_estimate(FlopTarget::TranscoderEmbedding, &p), 264);
        assert_eq!(flop_estimate(FlopTarget::TranscoderEncoder, &p), 776);
        assert_eq!(flop_estimate(FlopTarget::TranscoderDecoder, &p), 1032);
        // (110+52)*16 + 4*4*10*6
        assert_eq!(flop_estimate(FlopTarget::CrossMptLayer, &p), 3552);
        assert_eq!(flop_estimate(FlopTarget::CrossMptEmbedding, &p), 140);
        // 12*14*16 + 2*196*6
        assert_eq!(flop_estimate(FlopTarget::EcctLayer, &p), 5040);
        assert_eq!(flop_estimate(FlopTarget::EcctDecoder, &p), 6 * 5040 + 196);
    }

    #[test]
    fn compact_rounding() {
        assert_eq!(compact(726), "726");
        assert_eq!(compact(36_300), "36k");
        assert_eq!(compact(1_234_944), "1.2M");
        assert_eq!(compact(277_698_553), "278M");
        assert_eq!(compact(999_700), "1.0M");
    }

    #[test]
    fn display_agreement() {
        assert!(agrees_with_display(1280, "1280"));
        assert!(!agrees_with_display(1281, "1280"));
        assert!(agrees_with_display(22_627, "22k"));
        assert!(agrees_with_display(34_969, "35k"));
        assert!(agrees_with_display(1_234_944, "1.2M"));
        assert!(!agrees_with_display(1_334_944, "1.2M"));
        assert!(!agrees_with_display(21_400, "22k"));
        assert!(!agrees_with_display(5, "x"));
    }
}
