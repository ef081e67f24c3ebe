//! Self-describing binary checkpoints.
//!
//! Layout: magic bytes, format version, JSON-serialized config, then named
//! tensors as little-endian `f32` with explicit shapes. Weights live in
//! `f64` in memory; the narrowing to `f32` happens only here, so a
//! loaded-then-saved file is byte-identical and loaded parameters round-trip
//! bitwise through save/load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

use super::params::{LmConfig, LmParams};

const MAGIC: &[u8; 4] = b"UGLM";
const VERSION: u32 = 1;

pub fn save_checkpoint(params: &LmParams, config: &LmConfig, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(params, config)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Serialized checkpoint contents, exposed so callers can hash or compare
/// without touching the filesystem.
pub fn checkpoint_bytes(params: &LmParams, config: &LmConfig) -> Result<Vec<u8>> {
    config.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(VERSION)?;
    let cfg_json = serde_json::to_vec(config).map_err(|e| Error::Checkpoint(e.to_string()))?;
    out.write_u32::<LittleEndian>(cfg_json.len() as u32)?;
    out.extend_from_slice(&cfg_json);

    let tensors = params.named_tensors();
    out.write_u32::<LittleEndian>(tensors.len() as u32)?;
    for (name, shape, data) in tensors {
        let name_bytes = name.as_bytes();
        out.write_u16::<LittleEndian>(name_bytes.len() as u16)?;
        out.extend_from_slice(name_bytes);
        out.write_u8(shape.len() as u8)?;
        for &dim in &shape {
            out.write_u32::<LittleEndian>(dim as u32)?;
        }
        for &x in data {
            out.write_f32::<LittleEndian>(x as f32)?;
        }
    }
    Ok(out)
}

pub fn load_checkpoint(path: &Path) -> Result<(LmParams, LmConfig)> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}, not a model checkpoint")));
    }
    let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}, this build reads version {VERSION}"
        )));
    }
    let cfg_len = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let mut cfg_bytes = vec![0u8; cfg_len];
    r.read_exact(&mut cfg_bytes).map_err(truncated)?;
    let config: LmConfig = serde_json::from_slice(&cfg_bytes)
        .map_err(|e| Error::Checkpoint(format!("bad config block: {e}")))?;
    config.validate()?;

    let mut params = LmParams::zeros(&config);
    let expected: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .iter()
        .map(|(n, s, _)| (n.clone(), s.clone()))
        .collect();

    let count = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "tensor count {count} does not match the {} the config implies",
            expected.len()
        )));
    }

    let mut slots = params.tensors_mut();
    for (i, (want_name, want_shape)) in expected.iter().enumerate() {
        let name_len = r.read_u16::<LittleEndian>().map_err(truncated)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(truncated)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
        if &name != want_name {
            return Err(Error::Checkpoint(format!(
                "tensor {i} is '{name}', expected '{want_name}'"
            )));
        }
        let ndim = r.read_u8().map_err(truncated)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.read_u32::<LittleEndian>().map_err(truncated)? as usize);
        }
        if &shape != want_shape {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}' has shape {shape:?}, expected {want_shape:?}"
            )));
        }
        let slot = &mut slots[i];
        debug_assert_eq!(slot.len(), shape.iter().product::<usize>());
        for x in slot.iter_mut() {
            *x = r.read_f32::<LittleEndian>().map_err(truncated)? as f64;
        }
    }

    // Anything after the tensors is corruption, not a newer format.
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after tensor data".into()));
    }
    drop(slots);

    if !params.all_finite() {
        return Err(Error::Checkpoint("checkpoint contains non-finite values".into()));
    }
    Ok((params, config))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Checkpoint("truncated file".into())
    } else {
        Error::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::params::init_params;

    fn micro() -> (LmConfig, LmParams) {
        let cfg = LmConfig {
            vocab_size: 9,
            context_length: 8,
            embedding_dim: 8,
            num_layers: 1,
            num_heads: 2,
            feed_forward_dim: 8,
            dropout: 0.0,
            seed: 21,
        };
        let p = init_params(&cfg).unwrap();
        (cfg, p)
    }

    #[test]
    fn save_load_save_is_byte_identical_and_params_round_trip() {
        let (cfg, p) = micro();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");

        save_checkpoint(&p, &cfg, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let (loaded, loaded_cfg) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded_cfg, cfg);

        // Values that came through a checkpoint are f32-representable, so a
        // second save/load cycle reproduces them bitwise.
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&loaded, &loaded_cfg, &path2).unwrap();
        let second = std::fs::read(&path2).unwrap();
        assert_eq!(first, second);

        let (again, _) = load_checkpoint(&path2).unwrap();
        assert_eq!(loaded, again);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let (cfg, p) = micro();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&p, &cfg, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("truncated"), "{msg}"),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn future_version_is_a_versioned_error() {
        let (cfg, p) = micro();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&p, &cfg, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("version 2"), "{msg}"),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not_a_model.ckpt");
        std::fs::write(&path, b"JUNKJUNKJUNK").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
