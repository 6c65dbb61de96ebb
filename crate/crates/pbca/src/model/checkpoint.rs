//! Binary checkpoint format.
//!
//! Layout: magic bytes `PBCA1\n`; a 32-bit little-endian count of named
//! arrays; then per array a 16-bit name length, the UTF-8 name, an 8-bit
//! rank, `rank` 32-bit dims and the row-major 64-bit little-endian values.
//! The first array is the reserved `__config__` entry whose values are the
//! UTF-8 bytes of the config text, one byte per value, keeping the container
//! uniform. Parameter values round-trip bit-exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ForecastConfig, ForecastModel};

const MAGIC: &[u8; 6] = b"PBCA1\n";
const CONFIG_NAME: &str = "__config__";

pub fn save_checkpoint(model: &ForecastModel, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);

    let mut arrays: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    let config_bytes = model.config.to_text().into_bytes();
    arrays.push((
        CONFIG_NAME.to_string(),
        vec![config_bytes.len()],
        config_bytes.iter().map(|b| *b as f64).collect(),
    ));
    model.visit_params(&mut |name, tensor, _| {
        arrays.push((name.to_string(), tensor.dims().to_vec(), tensor.values().to_vec()));
    });

    buf.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, dims, values) in arrays {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(dims.len() as u8);
        for d in &dims {
            buf.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Config("truncated checkpoint".into()));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<ForecastModel> {
    let data = std::fs::read(path)?;
    let mut cur = Cursor { data: &data, pos: 0 };
    if cur.take(MAGIC.len())? != MAGIC {
        return Err(Error::Config(format!(
            "{}: not a checkpoint (bad magic bytes)",
            path.display()
        )));
    }
    let count = cur.u32()? as usize;
    if count == 0 {
        return Err(Error::Config("checkpoint contains no arrays".into()));
    }

    let mut arrays: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u16()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| Error::Config("array name is not UTF-8".into()))?;
        let rank = cur.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32()? as usize);
        }
        let len: usize = dims.iter().product();
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(cur.f64()?);
        }
        arrays.push((name, dims, values));
    }
    if cur.pos != data.len() {
        return Err(Error::Config("trailing bytes after last array".into()));
    }

    let (first_name, _, config_values) = &arrays[0];
    if first_name != CONFIG_NAME {
        return Err(Error::Config(format!(
            "first array must be {CONFIG_NAME}, found '{first_name}'"
        )));
    }
    let mut config_bytes = Vec::with_capacity(config_values.len());
    for v in config_values {
        if *v < 0.0 || *v > 255.0 || v.fract() != 0.0 {
            return Err(Error::Config("config entry holds non-byte values".into()));
        }
        config_bytes.push(*v as u8);
    }
    let config_text = String::from_utf8(config_bytes)
        .map_err(|_| Error::Config("config text is not UTF-8".into()))?;
    let config = ForecastConfig::from_text(&config_text, None)?;

    let mut model = ForecastModel::new(config)?;
    let mut by_name: std::collections::HashMap<String, (Vec<usize>, Vec<f64>)> = arrays
        .into_iter()
        .skip(1)
        .map(|(n, d, v)| (n, (d, v)))
        .collect();

    let mut failure: Option<Error> = None;
    model.visit_params_mut(&mut |name, tensor, _| {
        if failure.is_some() {
            return;
        }
        match by_name.remove(name) {
            None => failure = Some(Error::Config(format!("checkpoint is missing '{name}'"))),
            Some((dims, values)) => {
                if dims != tensor.dims() {
                    failure = Some(Error::Config(format!(
                        "'{name}' has dims {dims:?}, expected {:?}",
                        tensor.dims()
                    )));
                } else {
                    tensor.values_mut().copy_from_slice(&values);
                }
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(Error::Config(format!("checkpoint has unknown array '{extra}'")));
    }
    Ok(model)
}
