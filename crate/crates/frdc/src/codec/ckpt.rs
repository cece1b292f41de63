//! Checkpoint assembly: flow and codec parameters plus the lambda they
//! were trained for, under namespaced entry names.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grad::Array;
use crate::io::{read_checkpoint_entries, write_checkpoint_entries};
use crate::motion::FlowNetParams;
use crate::nn::ParamSet;

use super::params::CodecParams;

/// Loaded checkpoint contents. The digest identifies the exact parameter
/// bytes and is embedded in bitstream headers.
#[derive(Clone)]
pub struct CheckpointData {
    pub flow: FlowNetParams,
    pub codec: Option<CodecParams>,
    pub lambda: Option<f64>,
    pub digest: [u8; 32],
}

pub fn save_flow_checkpoint(path: &Path, flow: &FlowNetParams) -> Result<[u8; 32]> {
    write_checkpoint_entries(path, &flow.entries())
}

pub fn save_codec_checkpoint(
    path: &Path,
    flow: &FlowNetParams,
    codec: &CodecParams,
    lambda: f64,
) -> Result<[u8; 32]> {
    let lambda_arr = Array::scalar(lambda);
    let mut entries = flow.entries();
    entries.extend(codec.entries());
    entries.push(("meta.lambda".to_string(), &lambda_arr));
    write_checkpoint_entries(path, &entries)
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointData> {
    let (entries, digest) = read_checkpoint_entries(path)?;
    let map: BTreeMap<String, Array> = entries.into_iter().collect();
    let flow = FlowNetParams::from_entries(&map)?;
    let codec = if map.keys().any(|k| k.starts_with("codec.")) {
        Some(CodecParams::from_entries(&map)?)
    } else {
        None
    };
    let lambda = map.get("meta.lambda").map(|a| a.item());
    if codec.is_some() && lambda.is_none() {
        return Err(Error::CorruptFile {
            what: "checkpoint",
            detail: "codec parameters without meta.lambda".into(),
        });
    }
    Ok(CheckpointData {
        flow,
        codec,
        lambda,
        digest,
    })
}
