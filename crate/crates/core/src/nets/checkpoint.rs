//! On-disk layout: `manifest.json` (architecture, parameter layout, payload
//! digest) next to `params.bin` (`GZDPARAM`, little-endian u32 version, then
//! every parameter as little-endian f32 in layout order).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ArchSpec, Net};
use crate::diffcore::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"GZDPARAM";
const MANIFEST: &str = "manifest.json";
const PAYLOAD: &str = "params.bin";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Free-form role such as `net2` or `model1`.
    pub label: String,
    pub seed: u64,
    /// Hex SHA-256 of the training configuration that produced the weights.
    pub config_digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: ArchSpec,
    pub params: ParamSet<f32>,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    arch: ArchSpec,
    params: Vec<ParamEntry>,
    scalar_count: usize,
    payload_sha256: String,
    meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn net(&self) -> Result<Net> {
        Net::new(self.spec.clone())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the checkpoint into `dir`, creating it if needed. The payload goes
/// first and the manifest last, each through a rename, so a torn write shows
/// up as a digest mismatch on load.
pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    let net = ckpt.net()?;
    net.check_params(&ckpt.params)?;
    for p in ckpt.params.iter() {
        if !p.value.is_finite() {
            return Err(Error::NonFinite(format!("parameter {} before checkpointing", p.name)));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let scalar_count = ckpt.params.scalar_count();
    let mut payload = Vec::with_capacity(12 + 4 * scalar_count);
    payload.extend_from_slice(MAGIC);
    payload.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for p in ckpt.params.iter() {
        for v in p.value.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format_version: CHECKPOINT_VERSION,
        arch: ckpt.spec.clone(),
        params: ckpt
            .params
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
        scalar_count,
        payload_sha256: hex(&Sha256::digest(&payload)),
        meta: ckpt.meta.clone(),
    };
    let manifest_path = dir.join(MANIFEST);
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::json(&manifest_path, e))?;
    json.push(b'\n');
    write_atomic(&dir.join(PAYLOAD), &payload)?;
    write_atomic(&manifest_path, &json)
}

fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Error {
    Error::CorruptCheckpoint {
        path: path.into(),
        reason: reason.into(),
    }
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_slice(&text).map_err(|e| corrupt(&manifest_path, format!("unreadable manifest: {e}")))?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(corrupt(
            &manifest_path,
            format!("format version {} is not supported (expected {CHECKPOINT_VERSION})", manifest.format_version),
        ));
    }
    let net = Net::new(manifest.arch.clone()).map_err(|e| corrupt(&manifest_path, format!("bad architecture: {e}")))?;
    let layout = net.param_layout();
    let listed: Vec<(String, Vec<usize>)> = manifest.params.iter().map(|p| (p.name.clone(), p.shape.clone())).collect();
    if listed != layout {
        return Err(corrupt(&manifest_path, "parameter list does not match the architecture"));
    }
    let expected: usize = layout.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if manifest.scalar_count != expected {
        return Err(corrupt(
            &manifest_path,
            format!("scalar count {} but the architecture needs {expected}", manifest.scalar_count),
        ));
    }

    let payload_path = dir.join(PAYLOAD);
    let payload = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    if payload.len() < 12 || &payload[..8] != MAGIC {
        return Err(corrupt(&payload_path, "missing GZDPARAM header"));
    }
    let version = u32::from_le_bytes(payload[8..12].try_into().expect("four bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(&payload_path, format!("payload version {version} is not supported")));
    }
    let body = &payload[12..];
    if body.len() != 4 * expected {
        return Err(corrupt(
            &payload_path,
            format!("payload holds {} bytes of values, expected {}", body.len(), 4 * expected),
        ));
    }
    if hex(&Sha256::digest(&payload)) != manifest.payload_sha256 {
        return Err(corrupt(&payload_path, "payload digest does not match the manifest"));
    }

    let mut values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")));
    let mut params = ParamSet::new();
    for (name, shape) in layout {
        let n = shape.iter().product();
        let data: Vec<f32> = values.by_ref().take(n).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(corrupt(&payload_path, format!("non-finite value in {name}")));
        }
        params.push(name, Tensor::new(shape, data)?)?;
    }
    Ok(Checkpoint {
        spec: manifest.arch,
        params,
        meta: manifest.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{AgentSpec, Net1Spec};
    use super::*;

    fn sample() -> Checkpoint {
        let spec = ArchSpec::Agent(AgentSpec::default());
        let params = Net::new(spec.clone()).unwrap().init_params(11);
        Checkpoint {
            spec,
            params,
            meta: CheckpointMeta {
                label: "model1".into(),
                seed: 11,
                config_digest: "abc".into(),
            },
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let ckpt = sample();
        save_checkpoint(&a, &ckpt).unwrap();
        let loaded = load_checkpoint(&a).unwrap();
        assert_eq!(loaded, ckpt);
        save_checkpoint(&b, &loaded).unwrap();
        for f in [MANIFEST, PAYLOAD] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        }
    }

    #[test]
    fn corruption_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = sample();
        save_checkpoint(dir.path(), &ckpt).unwrap();
        let payload_path = dir.path().join(PAYLOAD);
        let good = fs::read(&payload_path).unwrap();

        let mut flipped = good.clone();
        flipped[100] ^= 0x40;
        fs::write(&payload_path, &flipped).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert_eq!(err.kind(), "corrupt-checkpoint");
        assert!(err.to_string().contains("digest"));

        fs::write(&payload_path, &good[..good.len() - 4]).unwrap();
        assert!(load_checkpoint(dir.path()).unwrap_err().to_string().contains("bytes"));

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        fs::write(&payload_path, &bad_magic).unwrap();
        assert!(load_checkpoint(dir.path()).unwrap_err().to_string().contains("header"));

        fs::write(&payload_path, &good).unwrap();
        fs::write(dir.path().join(MANIFEST), "{ not json").unwrap();
        assert_eq!(load_checkpoint(dir.path()).unwrap_err().kind(), "corrupt-checkpoint");
    }

    #[test]
    fn architecture_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &sample()).unwrap();
        let path = dir.path().join(MANIFEST);
        let mut manifest: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        manifest["arch"] = serde_json::to_value(ArchSpec::Net1(Net1Spec::default())).unwrap();
        fs::write(&path, serde_json::to_vec(&manifest).unwrap()).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(err.to_string().contains("parameter list"), "{err}");
    }

    #[test]
    fn mismatched_params_refuse_to_save() {
        let dir = tempfile::tempdir().unwrap();
        let mut ckpt = sample();
        ckpt.spec = ArchSpec::Net1(Net1Spec::default());
        assert!(save_checkpoint(dir.path(), &ckpt).is_err());
    }
}
