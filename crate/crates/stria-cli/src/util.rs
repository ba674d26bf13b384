//! Shared CLI plumbing: key=value spec parsing, config hashing, geometry
//! helpers and report headers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};
use stria_core::cost::{LayerMatrixPattern, LayerSpec};
use stria_core::kernel::KernelPattern;
use stria_core::{Error, Result};

pub fn parse_kv(spec: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = part.split_once('=').ok_or_else(|| Error::Parse {
            context: "spec".into(),
            msg: format!("expected key=value, got {part:?}"),
        })?;
        map.insert(key.trim().to_lowercase(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_usize(map: &BTreeMap<String, String>, key: &str) -> Result<Option<usize>> {
    map.get(key)
        .map(|v| {
            v.parse().map_err(|_| Error::Parse {
                context: "spec".into(),
                msg: format!("bad {key}={v:?}"),
            })
        })
        .transpose()
}

fn require_usize(map: &BTreeMap<String, String>, key: &str) -> Result<usize> {
    parse_usize(map, key)?.ok_or_else(|| Error::Parse {
        context: "spec".into(),
        msg: format!("missing {key}="),
    })
}

/// Block spec of the form `d=32,e=2,cn=2`.
pub fn parse_block_spec(spec: &str) -> Result<(usize, usize, usize)> {
    let map = parse_kv(spec)?;
    Ok((
        require_usize(&map, "d")?,
        require_usize(&map, "e")?,
        require_usize(&map, "cn")?,
    ))
}

/// Layer spec of the form
/// `ci=4,co=4,k=3,cn=2[,hw=4][,kernel=cross][,matrix=exrot_free]`.
/// Either `cn` or `hw` must be given; the other is derived from the slot
/// count.
pub struct LayerArg {
    pub layer: LayerSpec,
    pub c_n: usize,
}

pub fn parse_layer_spec(spec: &str, slots: usize) -> Result<LayerArg> {
    let map = parse_kv(spec)?;
    let c_i = require_usize(&map, "ci")?;
    let c_o = require_usize(&map, "co")?;
    let k = parse_usize(&map, "k")?.unwrap_or(3);
    let cn = parse_usize(&map, "cn")?;
    let hw = parse_usize(&map, "hw")?;
    let (c_n, w, h) = match (cn, hw) {
        (Some(c_n), None) => {
            let (w, h) = spatial_for_capacity(slots, c_n)?;
            (c_n, w, h)
        }
        (None, Some(hw)) => (
            stria_core::packing::channel_capacity(slots, hw, hw),
            hw,
            hw,
        ),
        (Some(c_n), Some(hw)) => (c_n, hw, hw),
        (None, None) => {
            return Err(Error::Parse {
                context: "spec".into(),
                msg: "layer spec needs cn= or hw=".into(),
            })
        }
    };
    let kernel = match map.get("kernel").map(String::as_str) {
        None | Some("regular") => KernelPattern::Regular,
        Some("cross") => KernelPattern::Cross,
        Some(other) => {
            return Err(Error::Parse {
                context: "spec".into(),
                msg: format!("unknown kernel pattern {other:?}"),
            })
        }
    };
    let matrix = match map.get("matrix").map(String::as_str) {
        None | Some("dense") => LayerMatrixPattern::Dense,
        Some("exrot_free") => LayerMatrixPattern::ExRotFree,
        Some(other) => {
            return Err(Error::Parse {
                context: "spec".into(),
                msg: format!("unknown matrix pattern {other:?}"),
            })
        }
    };
    let mut layer = LayerSpec::conv(c_i, c_o, k, w, h)
        .with_kernel(kernel)
        .with_matrix(matrix);
    layer.stride = parse_usize(&map, "stride")?.unwrap_or(1);
    Ok(LayerArg { layer, c_n })
}

/// Smallest power-of-two spatial footprint giving the requested capacity:
/// one channel occupies `slots / c_n` slots, split as evenly as possible
/// between width and height.
pub fn spatial_for_capacity(slots: usize, c_n: usize) -> Result<(usize, usize)> {
    if c_n == 0 || !c_n.is_power_of_two() || c_n > slots {
        return Err(Error::Config(format!(
            "capacity {c_n} must be a power of two no larger than {slots} slots"
        )));
    }
    let block = slots / c_n;
    let bits = block.trailing_zeros();
    let w = 1usize << bits.div_ceil(2);
    let h = block / w;
    if w < 4 || h < 4 {
        return Err(Error::Config(format!(
            "capacity {c_n} leaves a {w}x{h} channel footprint, too small for 3x3 kernels"
        )));
    }
    Ok((w, h))
}

/// Stable hex digest of the resolved run configuration.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in &digest[..8] {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

/// Header embedded in every report for reproducibility.
#[derive(Debug, Serialize)]
pub struct ReportHeader {
    pub tool_version: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl ReportHeader {
    pub fn new<T: Serialize>(config: &T, seed: u64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            config_hash: config_hash(config),
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_spec_parses() {
        assert_eq!(parse_block_spec("D=32,e=2,cn=2").unwrap(), (32, 2, 2));
        assert!(parse_block_spec("d=32,e=2").is_err());
    }

    #[test]
    fn layer_spec_derives_capacity_or_footprint() {
        let arg = parse_layer_spec("ci=4,co=4,k=3,cn=2", 8192).unwrap();
        assert_eq!(arg.c_n, 2);
        assert_eq!((arg.layer.w, arg.layer.h), (64, 64));
        let arg = parse_layer_spec("ci=4,co=4,k=3,hw=56", 8192).unwrap();
        assert_eq!(arg.c_n, 2);
    }

    #[test]
    fn spatial_split_prefers_square() {
        assert_eq!(spatial_for_capacity(8192, 2).unwrap(), (64, 64));
        assert_eq!(spatial_for_capacity(8192, 128).unwrap(), (8, 8));
        assert_eq!(spatial_for_capacity(2048, 4).unwrap(), (32, 16));
        assert!(spatial_for_capacity(64, 64).is_err());
    }

    #[test]
    fn config_hash_is_stable() {
        #[derive(Serialize)]
        struct C {
            a: u32,
        }
        assert_eq!(config_hash(&C { a: 1 }), config_hash(&C { a: 1 }));
        assert_ne!(config_hash(&C { a: 1 }), config_hash(&C { a: 2 }));
    }
}
