use super::{load_alist, parse_alist, CodeError, LinearCode, PolarCodeSpec};
use std::path::Path;

/// Design Eb/N0 (dB) for polar codes constructed by name.
pub const DEFAULT_POLAR_DESIGN_EBN0_DB: f64 = 0.0;

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../codes/", $name, ".alist")))),*]
    };
}

/// Parity-check matrices shipped with the crate, by name.
pub const BUNDLED_CODES: &[(&str, &str)] = bundled![
    "hamming_7_4",
    "ldpc_49_24",
    "ldpc_121_60",
    "ldpc_121_70",
    "ldpc_121_80",
    "ldpc_384_320",
    "bch_31_16",
    "bch_63_36",
    "bch_63_45",
    "bch_63_51",
];

/// Resolves a code by bundled name, `polar_<N>_<k>`, or path to an alist file.
pub fn load_code(name: &str) -> Result<LinearCode, CodeError> {
    if let Some((_, text)) = BUNDLED_CODES.iter().find(|(n, _)| *n == name) {
        return Ok(LinearCode::from_parity(name, parse_alist(text)?));
    }
    if let Some(rest) = name.strip_prefix("polar_") {
        let mut parts = rest.split('_').map(str::parse::<usize>);
        if let (Some(Ok(n)), Some(Ok(k)), None) = (parts.next(), parts.next(), parts.next()) {
            let spec = PolarCodeSpec::bhattacharyya(n, k, DEFAULT_POLAR_DESIGN_EBN0_DB)?;
            return Ok(LinearCode::polar(name, spec));
        }
    }
    let path = Path::new(name);
    if path.is_file() {
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| name.to_string());
        return Ok(LinearCode::from_parity(label, load_alist(path)?));
    }
    Err(CodeError::Unknown(name.to_string()))
}
