//! Persistence: a self-describing single-file array container and model
//! checkpoints built on top of it.
//!
//! Container layout (version 1, all integers little-endian):
//!
//! ```text
//! magic            4 bytes  "TEM1"
//! version          u32
//! meta_count       u32
//!   per entry:     key_len u32, key bytes (utf-8),
//!                  value_len u32, value bytes (utf-8)
//! array_count      u32
//!   per entry:     name_len u32, name bytes (utf-8),
//!                  dtype u8 (0 = f64, 1 = i64), ndim u8,
//!                  dims ndim x u64, payload_crc32 u32, payload_len u64
//! payloads         concatenated in index order
//! ```
//!
//! Payload length must equal the element count times 8; every array is
//! covered by a CRC32 and the file length must match the index exactly.
//! Metadata always includes the creation seed and the configuration hash.
//! Entries are ordered by key/name, so identical content produces identical
//! bytes.

use crate::error::{Error, Result};
use crate::linalg::Csr;
use crate::nvar::{FeatureDescriptor, FeatureLayout, FeatureScale, NvarConfig, NvarModel};
use crate::parallel::DomainDecomposition;
use crate::reservoir::{EsnMacroParams, EsnMatrices, EsnModel, EsnParams, InputScaling};
use crate::train::Normalizer;
use ndarray::{Array1, Array2};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"TEM1";
pub const FORMAT_VERSION: u32 = 1;

/// Keys every container must carry.
pub const META_SEED: &str = "seed";
pub const META_CONFIG_HASH: &str = "config_hash";

fn crc32(bytes: &[u8]) -> u32 {
    // reflected CRC-32 (IEEE), table built on first use
    static TABLE: std::sync::OnceLock<[u32; 256]> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [0u32; 256];
        for (i, slot) in t.iter_mut().enumerate() {
            let mut c = i as u32;
            for _ in 0..8 {
                c = if c & 1 != 0 { 0xedb8_8320 ^ (c >> 1) } else { c >> 1 };
            }
            *slot = c;
        }
        t
    });
    let mut c = !0u32;
    for &b in bytes {
        c = table[((c ^ b as u32) & 0xff) as usize] ^ (c >> 8);
    }
    !c
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64 { shape: Vec<usize>, data: Vec<f64> },
    I64 { shape: Vec<usize>, data: Vec<i64> },
}

impl ArrayData {
    pub fn shape(&self) -> &[usize] {
        match self {
            ArrayData::F64 { shape, .. } | ArrayData::I64 { shape, .. } => shape,
        }
    }

    fn dtype_tag(&self) -> u8 {
        match self {
            ArrayData::F64 { .. } => 0,
            ArrayData::I64 { .. } => 1,
        }
    }

    fn payload(&self) -> Vec<u8> {
        match self {
            ArrayData::F64 { data, .. } => {
                let mut out = Vec::with_capacity(data.len() * 8);
                for v in data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out
            }
            ArrayData::I64 { data, .. } => {
                let mut out = Vec::with_capacity(data.len() * 8);
                for v in data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out
            }
        }
    }
}

/// Named arrays plus string metadata in one file.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayContainer {
    pub meta: BTreeMap<String, String>,
    arrays: BTreeMap<String, ArrayData>,
}

impl ArrayContainer {
    pub fn new(seed: u64, config_hash: u64) -> Self {
        let mut meta = BTreeMap::new();
        meta.insert(META_SEED.to_string(), seed.to_string());
        meta.insert(META_CONFIG_HASH.to_string(), format!("{config_hash:016x}"));
        meta.insert("rng_version".to_string(), crate::rng::RNG_VERSION.to_string());
        ArrayContainer {
            meta,
            arrays: BTreeMap::new(),
        }
    }

    pub fn array_names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(|s| s.as_str())
    }

    pub fn insert(&mut self, name: &str, data: ArrayData) -> Result<()> {
        let count: usize = data.shape().iter().product();
        let len = match &data {
            ArrayData::F64 { data, .. } => data.len(),
            ArrayData::I64 { data, .. } => data.len(),
        };
        if count != len {
            return Err(Error::shape(format!("{count} elements"), format!("{len}")));
        }
        self.arrays.insert(name.to_string(), data);
        Ok(())
    }

    pub fn insert_f64_slice(&mut self, name: &str, shape: &[usize], data: &[f64]) -> Result<()> {
        self.insert(
            name,
            ArrayData::F64 {
                shape: shape.to_vec(),
                data: data.to_vec(),
            },
        )
    }

    pub fn insert_array2(&mut self, name: &str, a: &Array2<f64>) -> Result<()> {
        let standard = a.as_standard_layout();
        self.insert_f64_slice(
            name,
            &[a.nrows(), a.ncols()],
            standard.as_slice().expect("standard layout"),
        )
    }

    pub fn insert_array1(&mut self, name: &str, a: &Array1<f64>) -> Result<()> {
        self.insert_f64_slice(name, &[a.len()], a.as_slice().expect("contiguous"))
    }

    pub fn insert_i64_slice(&mut self, name: &str, shape: &[usize], data: &[i64]) -> Result<()> {
        self.insert(
            name,
            ArrayData::I64 {
                shape: shape.to_vec(),
                data: data.to_vec(),
            },
        )
    }

    pub fn get(&self, name: &str) -> Result<&ArrayData> {
        self.arrays
            .get(name)
            .ok_or_else(|| Error::Integrity(format!("missing array '{name}'")))
    }

    pub fn get_f64(&self, name: &str) -> Result<(&[usize], &[f64])> {
        match self.get(name)? {
            ArrayData::F64 { shape, data } => Ok((shape, data)),
            ArrayData::I64 { .. } => Err(Error::Integrity(format!("array '{name}' is not f64"))),
        }
    }

    pub fn get_i64(&self, name: &str) -> Result<(&[usize], &[i64])> {
        match self.get(name)? {
            ArrayData::I64 { shape, data } => Ok((shape, data)),
            ArrayData::F64 { .. } => Err(Error::Integrity(format!("array '{name}' is not i64"))),
        }
    }

    pub fn get_array2(&self, name: &str) -> Result<Array2<f64>> {
        let (shape, data) = self.get_f64(name)?;
        if shape.len() != 2 {
            return Err(Error::Integrity(format!("array '{name}' is not 2-d")));
        }
        Array2::from_shape_vec((shape[0], shape[1]), data.to_vec())
            .map_err(|e| Error::Integrity(e.to_string()))
    }

    pub fn get_array1(&self, name: &str) -> Result<Array1<f64>> {
        let (shape, data) = self.get_f64(name)?;
        if shape.len() != 1 {
            return Err(Error::Integrity(format!("array '{name}' is not 1-d")));
        }
        Ok(Array1::from_vec(data.to_vec()))
    }

    pub fn meta_u64(&self, key: &str) -> Result<u64> {
        self.meta
            .get(key)
            .ok_or_else(|| Error::Integrity(format!("missing metadata '{key}'")))?
            .parse()
            .map_err(|_| Error::Integrity(format!("metadata '{key}' is not an integer")))
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Integrity(format!("missing metadata '{key}'")))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        if !self.meta.contains_key(META_SEED) || !self.meta.contains_key(META_CONFIG_HASH) {
            return Err(Error::config(
                "container metadata must include seed and config_hash",
            ));
        }
        w.write_all(&MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.meta.len() as u32).to_le_bytes())?;
        for (k, v) in &self.meta {
            w.write_all(&(k.len() as u32).to_le_bytes())?;
            w.write_all(k.as_bytes())?;
            w.write_all(&(v.len() as u32).to_le_bytes())?;
            w.write_all(v.as_bytes())?;
        }
        w.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
        let mut payloads = Vec::with_capacity(self.arrays.len());
        for (name, array) in &self.arrays {
            let payload = array.payload();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&[array.dtype_tag(), array.shape().len() as u8])?;
            for &d in array.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            w.write_all(&crc32(&payload).to_le_bytes())?;
            w.write_all(&(payload.len() as u64).to_le_bytes())?;
            payloads.push(payload);
        }
        for payload in payloads {
            w.write_all(&payload)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor::new(bytes);
        let magic = cursor.take_bytes(4)?;
        if magic != MAGIC {
            return Err(Error::Integrity("bad magic; not a TEM1 container".into()));
        }
        let version = cursor.take_u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let meta_count = cursor.take_u32()? as usize;
        let mut meta = BTreeMap::new();
        for _ in 0..meta_count {
            let key = cursor.take_string()?;
            let value = cursor.take_string()?;
            meta.insert(key, value);
        }
        let array_count = cursor.take_u32()? as usize;
        let mut index = Vec::with_capacity(array_count);
        for _ in 0..array_count {
            let name = cursor.take_string()?;
            let dtype = cursor.take_bytes(1)?[0];
            let ndim = cursor.take_bytes(1)?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cursor.take_u64()? as usize);
            }
            let crc = cursor.take_u32()?;
            let len = cursor.take_u64()? as usize;
            let count: usize = shape.iter().product();
            if len != count * 8 {
                return Err(Error::Integrity(format!(
                    "array '{name}': payload length {len} does not match shape {shape:?}"
                )));
            }
            index.push((name, dtype, shape, crc, len));
        }
        let mut arrays = BTreeMap::new();
        for (name, dtype, shape, crc, len) in index {
            let payload = cursor.take_bytes(len)?;
            if crc32(payload) != crc {
                return Err(Error::Integrity(format!("array '{name}': checksum mismatch")));
            }
            let data = match dtype {
                0 => ArrayData::F64 {
                    shape,
                    data: payload
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                },
                1 => ArrayData::I64 {
                    shape,
                    data: payload
                        .chunks_exact(8)
                        .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                },
                other => {
                    return Err(Error::Integrity(format!(
                        "array '{name:?}': unknown dtype tag {other}"
                    )))
                }
            };
            arrays.insert(name, data);
        }
        if !cursor.is_empty() {
            return Err(Error::Integrity("trailing bytes after last payload".into()));
        }
        if !meta.contains_key(META_SEED) || !meta.contains_key(META_CONFIG_HASH) {
            return Err(Error::Integrity(
                "container metadata lacks seed or config_hash".into(),
            ));
        }
        Ok(ArrayContainer { meta, arrays })
    }

    /// Write atomically: temp file in the target directory, then rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, |w| self.write_to(w))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }
}

/// Write through a temp file and rename so partial outputs never appear
/// under the final name.
pub fn atomic_write<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
{
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    let file = std::fs::File::create(&tmp)?;
    let mut w = std::io::BufWriter::new(file);
    write(&mut w)?;
    use std::io::Write as _;
    w.flush()?;
    drop(w);
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take_bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Integrity(format!(
                "truncated container: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn take_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take_bytes(4)?.try_into().unwrap()))
    }

    fn take_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take_bytes(8)?.try_into().unwrap()))
    }

    fn take_string(&mut self) -> Result<String> {
        let len = self.take_u32()? as usize;
        let bytes = self.take_bytes(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Integrity("non-utf8 string in container".into()))
    }

    fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Training provenance stored with every checkpoint.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    pub dataset_hash: String,
    pub config_hash: String,
    pub seed: u64,
    pub n_train: usize,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub enum ModelCheckpoint {
    Esn(EsnModel<f64>),
    Nvar(NvarModel<f64>),
}

impl ModelCheckpoint {
    pub fn architecture(&self) -> &'static str {
        match self {
            ModelCheckpoint::Esn(_) => "esn",
            ModelCheckpoint::Nvar(_) => "nvar",
        }
    }
}

/// Everything needed to reproduce predictions: model, decomposition,
/// normalizer, provenance.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelCheckpoint,
    pub decomp: DomainDecomposition,
    pub normalizer: Normalizer<f64>,
    pub provenance: Provenance,
}

fn stack_readouts(readouts: &[Array2<f64>]) -> (Vec<usize>, Vec<f64>) {
    let n_groups = readouts.len();
    let (rows, cols) = (readouts[0].nrows(), readouts[0].ncols());
    let mut flat = Vec::with_capacity(n_groups * rows * cols);
    for w in readouts {
        let std = w.as_standard_layout();
        flat.extend_from_slice(std.as_slice().expect("standard layout"));
    }
    (vec![n_groups, rows, cols], flat)
}

fn unstack_readouts(shape: &[usize], flat: &[f64]) -> Result<Vec<Array2<f64>>> {
    if shape.len() != 3 {
        return Err(Error::Integrity("readout stack must be 3-d".into()));
    }
    let (n_groups, rows, cols) = (shape[0], shape[1], shape[2]);
    let mut out = Vec::with_capacity(n_groups);
    for g in 0..n_groups {
        let start = g * rows * cols;
        let w = Array2::from_shape_vec((rows, cols), flat[start..start + rows * cols].to_vec())
            .map_err(|e| Error::Integrity(e.to_string()))?;
        out.push(w);
    }
    Ok(out)
}

impl Checkpoint {
    pub fn to_container(&self) -> Result<ArrayContainer> {
        let mut c = ArrayContainer::new(self.provenance.seed, 0);
        // provenance and identity
        c.meta
            .insert(META_CONFIG_HASH.into(), self.provenance.config_hash.clone());
        c.meta
            .insert("dataset_hash".into(), self.provenance.dataset_hash.clone());
        c.meta
            .insert("n_train".into(), self.provenance.n_train.to_string());
        c.meta
            .insert("architecture".into(), self.model.architecture().into());
        c.insert_f64_slice("provenance_beta", &[1], &[self.provenance.beta])?;

        // decomposition
        let (nx, ny, nz) = self.decomp.dims();
        let (lx, ly) = self.decomp.group_dims();
        for (k, v) in [
            ("decomp_nx", nx),
            ("decomp_ny", ny),
            ("decomp_nz", nz),
            ("decomp_nx_loc", lx),
            ("decomp_ny_loc", ly),
            ("decomp_overlap", self.decomp.n_overlap()),
        ] {
            c.meta.insert(k.into(), v.to_string());
        }

        // normalizer
        match &self.normalizer {
            Normalizer::GlobalSd { mu, sd } => {
                c.meta.insert("normalizer".into(), "global_sd".into());
                c.insert_f64_slice("normalizer_params", &[2], &[*mu, *sd])?;
            }
            Normalizer::GlobalMaxMin { mu, range } => {
                c.meta.insert("normalizer".into(), "global_max_min".into());
                c.insert_f64_slice("normalizer_params", &[2], &[*mu, *range])?;
            }
            Normalizer::PerChannelSd { mu, sd } => {
                c.meta.insert("normalizer".into(), "per_channel_sd".into());
                c.insert_array1("normalizer_mu", mu)?;
                c.insert_array1("normalizer_sd", sd)?;
            }
        }

        match &self.model {
            ModelCheckpoint::Esn(m) => {
                c.meta.insert("esn_n_hidden".into(), m.params.n_hidden.to_string());
                c.meta.insert("esn_kappa".into(), m.params.kappa.to_string());
                c.meta.insert("esn_seed".into(), m.params.seed.to_string());
                c.meta.insert(
                    "esn_input_scaling".into(),
                    match m.params.input_scaling {
                        InputScaling::SingularValue => "singular_value".into(),
                        InputScaling::Raw => "raw".to_string(),
                    },
                );
                c.meta.insert("esn_n_input".into(), m.n_input.to_string());
                let mp = &m.macro_params;
                c.insert_f64_slice(
                    "esn_macro",
                    &[5],
                    &[mp.rho, mp.sigma, mp.sigma_b, mp.alpha, mp.beta],
                )?;
                let adj = &m.matrices.adjacency;
                c.insert_i64_slice(
                    "esn_adj_row_ptr",
                    &[adj.row_ptr().len()],
                    &adj.row_ptr().iter().map(|&v| v as i64).collect::<Vec<_>>(),
                )?;
                c.insert_i64_slice(
                    "esn_adj_col_idx",
                    &[adj.col_idx().len()],
                    &adj.col_idx().iter().map(|&v| v as i64).collect::<Vec<_>>(),
                )?;
                c.insert_f64_slice("esn_adj_values", &[adj.values().len()], adj.values())?;
                c.insert_array2("esn_input_map", &m.matrices.input_map)?;
                c.insert_array1("esn_bias", &m.matrices.bias)?;
                c.meta
                    .insert("esn_redraws".into(), m.matrices.redraws.to_string());
                let (shape, flat) = stack_readouts(&m.readouts);
                c.insert_f64_slice("readouts", &shape, &flat)?;
            }
            ModelCheckpoint::Nvar(m) => {
                c.meta.insert("nvar_degree".into(), m.cfg.degree.to_string());
                c.meta.insert("nvar_n_lag".into(), m.cfg.n_lag.to_string());
                c.meta
                    .insert("nvar_n_neighbor".into(), m.cfg.n_neighbor.to_string());
                c.meta.insert("nvar_n_input".into(), m.n_input.to_string());
                c.meta.insert(
                    "nvar_layout_fingerprint".into(),
                    format!("{:016x}", m.layout.fingerprint()),
                );
                c.insert_f64_slice("nvar_beta", &[1], &[m.cfg.beta])?;
                // descriptors as rows [kind, cell_a, lag_a, cell_b, lag_b]
                let mut rows = Vec::with_capacity(m.layout.len() * 5);
                for d in &m.layout.descriptors {
                    match *d {
                        FeatureDescriptor::Constant => rows.extend([1i64, 0, 0, 0, 0]),
                        FeatureDescriptor::Linear { cell, lag } => {
                            rows.extend([2i64, cell as i64, lag as i64, 0, 0])
                        }
                        FeatureDescriptor::Quadratic {
                            cell_a,
                            lag_a,
                            cell_b,
                            lag_b,
                        } => rows.extend([
                            3i64,
                            cell_a as i64,
                            lag_a as i64,
                            cell_b as i64,
                            lag_b as i64,
                        ]),
                    }
                }
                c.insert_i64_slice("nvar_layout", &[m.layout.len(), 5], &rows)?;
                c.insert_array1("nvar_scale", &m.scale.scale)?;
                c.insert_i64_slice(
                    "nvar_zero_variance",
                    &[m.scale.flagged_zero_variance.len()],
                    &m.scale
                        .flagged_zero_variance
                        .iter()
                        .map(|&v| v as i64)
                        .collect::<Vec<_>>(),
                )?;
                let (shape, flat) = stack_readouts(&m.readouts);
                c.insert_f64_slice("readouts", &shape, &flat)?;
            }
        }
        Ok(c)
    }

    pub fn from_container(c: &ArrayContainer) -> Result<Self> {
        let decomp = DomainDecomposition::new(
            c.meta_u64("decomp_nx")? as usize,
            c.meta_u64("decomp_ny")? as usize,
            c.meta_u64("decomp_nz")? as usize,
            c.meta_u64("decomp_nx_loc")? as usize,
            c.meta_u64("decomp_ny_loc")? as usize,
            c.meta_u64("decomp_overlap")? as usize,
        )?;
        let normalizer = match c.meta_str("normalizer")? {
            "global_sd" => {
                let (_, p) = c.get_f64("normalizer_params")?;
                Normalizer::GlobalSd { mu: p[0], sd: p[1] }
            }
            "global_max_min" => {
                let (_, p) = c.get_f64("normalizer_params")?;
                Normalizer::GlobalMaxMin {
                    mu: p[0],
                    range: p[1],
                }
            }
            "per_channel_sd" => Normalizer::PerChannelSd {
                mu: c.get_array1("normalizer_mu")?,
                sd: c.get_array1("normalizer_sd")?,
            },
            other => return Err(Error::Integrity(format!("unknown normalizer '{other}'"))),
        };
        let provenance = Provenance {
            dataset_hash: c.meta_str("dataset_hash")?.to_string(),
            config_hash: c.meta_str(META_CONFIG_HASH)?.to_string(),
            seed: c.meta_u64(META_SEED)?,
            n_train: c.meta_u64("n_train")? as usize,
            beta: c.get_f64("provenance_beta")?.1[0],
        };
        let (shape, flat) = c.get_f64("readouts")?;
        let readouts = unstack_readouts(shape, flat)?;

        let model = match c.meta_str("architecture")? {
            "esn" => {
                let (_, macro_raw) = c.get_f64("esn_macro")?;
                let macro_params = EsnMacroParams {
                    rho: macro_raw[0],
                    sigma: macro_raw[1],
                    sigma_b: macro_raw[2],
                    alpha: macro_raw[3],
                    beta: macro_raw[4],
                };
                let n_hidden = c.meta_u64("esn_n_hidden")? as usize;
                let params = EsnParams {
                    n_hidden,
                    kappa: c.meta_u64("esn_kappa")? as usize,
                    seed: c.meta_u64("esn_seed")?,
                    input_scaling: match c.meta_str("esn_input_scaling")? {
                        "singular_value" => InputScaling::SingularValue,
                        "raw" => InputScaling::Raw,
                        other => {
                            return Err(Error::Integrity(format!(
                                "unknown input scaling '{other}'"
                            )))
                        }
                    },
                };
                let (_, row_ptr) = c.get_i64("esn_adj_row_ptr")?;
                let (_, col_idx) = c.get_i64("esn_adj_col_idx")?;
                let (_, values) = c.get_f64("esn_adj_values")?;
                let adjacency = Csr::from_raw_parts(
                    n_hidden,
                    n_hidden,
                    row_ptr.iter().map(|&v| v as usize).collect(),
                    col_idx.iter().map(|&v| v as usize).collect(),
                    values.to_vec(),
                )?;
                let matrices = EsnMatrices {
                    adjacency,
                    input_map: c.get_array2("esn_input_map")?,
                    bias: c.get_array1("esn_bias")?,
                    redraws: c.meta_u64("esn_redraws")? as u32,
                };
                ModelCheckpoint::Esn(EsnModel {
                    params,
                    macro_params,
                    matrices,
                    readouts,
                    n_input: c.meta_u64("esn_n_input")? as usize,
                })
            }
            "nvar" => {
                let cfg = NvarConfig {
                    degree: c.meta_u64("nvar_degree")? as usize,
                    n_lag: c.meta_u64("nvar_n_lag")? as usize,
                    n_neighbor: c.meta_u64("nvar_n_neighbor")? as usize,
                    beta: c.get_f64("nvar_beta")?.1[0],
                };
                let (shape, rows) = c.get_i64("nvar_layout")?;
                if shape.len() != 2 || shape[1] != 5 {
                    return Err(Error::Integrity("nvar layout must be (n, 5)".into()));
                }
                let mut descriptors = Vec::with_capacity(shape[0]);
                for r in rows.chunks_exact(5) {
                    descriptors.push(match r[0] {
                        1 => FeatureDescriptor::Constant,
                        2 => FeatureDescriptor::Linear {
                            cell: r[1] as usize,
                            lag: r[2] as usize,
                        },
                        3 => FeatureDescriptor::Quadratic {
                            cell_a: r[1] as usize,
                            lag_a: r[2] as usize,
                            cell_b: r[3] as usize,
                            lag_b: r[4] as usize,
                        },
                        other => {
                            return Err(Error::Integrity(format!(
                                "unknown descriptor kind {other}"
                            )))
                        }
                    });
                }
                let n_input = c.meta_u64("nvar_n_input")? as usize;
                let layout = FeatureLayout {
                    descriptors,
                    n_cells: n_input,
                    n_lag: cfg.n_lag,
                };
                let fingerprint = format!("{:016x}", layout.fingerprint());
                if fingerprint != c.meta_str("nvar_layout_fingerprint")? {
                    return Err(Error::Integrity("layout fingerprint mismatch".into()));
                }
                let (_, flagged) = c.get_i64("nvar_zero_variance")?;
                ModelCheckpoint::Nvar(NvarModel {
                    cfg,
                    layout,
                    scale: FeatureScale {
                        scale: c.get_array1("nvar_scale")?,
                        flagged_zero_variance: flagged.iter().map(|&v| v as usize).collect(),
                    },
                    readouts,
                    n_input,
                })
            }
            other => return Err(Error::Integrity(format!("unknown architecture '{other}'"))),
        };
        Ok(Checkpoint {
            model,
            decomp,
            normalizer,
            provenance,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&ArrayContainer::load(path)?)
    }
}
