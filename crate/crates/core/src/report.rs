//! Hashing and serialization helpers shared by reports and artifacts.

use serde::{Deserialize, Deserializer, Serializer};
use sha2::{Digest, Sha256};

pub fn sha256_hex(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Formats an `L_p` exponent, `inf` for infinity.
pub fn fmt_p(p: f64) -> String {
    if p.is_infinite() {
        "inf".to_string()
    } else {
        format!("{p}")
    }
}

/// Parses `inf`, `infinity` or a number `>= 1`.
pub fn parse_p(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    let p = match t.as_str() {
        "inf" | "infinity" | "max" => f64::INFINITY,
        _ => t.parse::<f64>().map_err(|e| format!("bad exponent {s:?}: {e}"))?,
    };
    if p >= 1.0 {
        Ok(p)
    } else {
        Err(format!("exponent {s:?} must be >= 1"))
    }
}

/// Serde adapter storing `p` as a JSON number, or the string `"inf"`.
pub mod serde_p {
    use super::*;

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        if p.is_finite() {
            s.serialize_f64(*p)
        } else {
            s.serialize_str("inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(p),
            Raw::Str(s) => parse_p(&s).map_err(serde::de::Error::custom),
        }
    }
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
