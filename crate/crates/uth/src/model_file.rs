//! The UTHM model container: one magic, one version, a method tag, and a
//! method-specific body. Round trips are bit-exact.
//!
//! Layout: magic "UTHM" | version u32 LE = 1 | tag (len u16 LE, UTF-8) |
//! body. The SRBM body is n_layers u32 then, per layer, n_vis u32,
//! n_hid u32, W row-major binary32 LE, bias_vis, bias_hid. Baseline
//! bodies begin with n_bits u32 and store parameters as binary64 LE so
//! the 1e-8 orthogonality checks survive persistence.

use ndarray::{Array1, Array2};

use crate::error::{Result, UthError};
use crate::hashers::{BaselineMethod, HasherKind, HasherModel, PcaModel};
use crate::rbm::RbmLayer;
use crate::srbm::SrbmStack;
use crate::wire::{ByteReader, ByteWriter};

pub const MODEL_MAGIC: &[u8; 4] = b"UTHM";
pub const MODEL_VERSION: u32 = 1;
pub const SRBM_TAG: &str = "srbm";

/// Any model the pipeline can persist: the trained stack or one of the
/// six baselines.
#[derive(Debug, Clone)]
pub enum SavedModel {
    Srbm(SrbmStack),
    Baseline(HasherModel),
}

impl SavedModel {
    pub fn tag(&self) -> &'static str {
        match self {
            SavedModel::Srbm(_) => SRBM_TAG,
            SavedModel::Baseline(m) => m.method().tag(),
        }
    }

    pub fn n_bits(&self) -> usize {
        match self {
            SavedModel::Srbm(s) => s.n_bits(),
            SavedModel::Baseline(m) => m.n_bits(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            SavedModel::Srbm(s) => s.input_dim(),
            SavedModel::Baseline(m) => m.input_dim(),
        }
    }
}

fn write_usize_u32(w: &mut ByteWriter, v: usize, what: &str) -> Result<()> {
    u32::try_from(v)
        .map_err(|_| UthError::Argument(format!("{what} {v} exceeds the u32 format limit")))
        .map(|v| w.put_u32(v))
}

fn put_f32_cast(w: &mut ByteWriter, values: impl Iterator<Item = f64>) {
    for v in values {
        w.put_f32(v as f32);
    }
}

fn put_f64_iter(w: &mut ByteWriter, values: impl Iterator<Item = f64>) {
    for v in values {
        w.put_f64(v);
    }
}

/// Serializes a model to the UTHM byte layout.
pub fn model_to_bytes(model: &SavedModel) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.put_bytes(MODEL_MAGIC);
    w.put_u32(MODEL_VERSION);
    w.put_string(model.tag())?;
    match model {
        SavedModel::Srbm(stack) => {
            write_usize_u32(&mut w, stack.layers().len(), "layer count")?;
            for layer in stack.layers() {
                write_usize_u32(&mut w, layer.n_vis(), "layer width")?;
                write_usize_u32(&mut w, layer.n_hid(), "layer width")?;
                put_f32_cast(&mut w, layer.weights().iter().copied());
                put_f32_cast(&mut w, layer.bias_vis().iter().copied());
                put_f32_cast(&mut w, layer.bias_hid().iter().copied());
            }
        }
        SavedModel::Baseline(m) => {
            write_usize_u32(&mut w, m.n_bits(), "n_bits")?;
            match m.kind() {
                HasherKind::Lsh { projections } => {
                    write_usize_u32(&mut w, projections.nrows(), "dim")?;
                    put_f64_iter(&mut w, projections.iter().copied());
                }
                HasherKind::Sklsh { w: proj, b, t, gamma } => {
                    write_usize_u32(&mut w, proj.nrows(), "dim")?;
                    w.put_f64(*gamma);
                    put_f64_iter(&mut w, proj.iter().copied());
                    put_f64_iter(&mut w, b.iter().copied());
                    put_f64_iter(&mut w, t.iter().copied());
                }
                HasherKind::Sh { pca, ranges, modes } => {
                    write_pca(&mut w, pca)?;
                    for &(a, b) in ranges {
                        w.put_f64(a);
                        w.put_f64(b);
                    }
                    for &(d, j) in modes {
                        w.put_u32(d);
                        w.put_u32(j);
                    }
                }
                HasherKind::PcaHash { pca, rotation } | HasherKind::Itq { pca, rotation } => {
                    write_pca(&mut w, pca)?;
                    put_f64_iter(&mut w, rotation.iter().copied());
                }
                HasherKind::Bpbc { d1, d2, r1, r2 } => {
                    write_usize_u32(&mut w, *d1, "bpbc shape")?;
                    write_usize_u32(&mut w, *d2, "bpbc shape")?;
                    put_f64_iter(&mut w, r1.iter().copied());
                    put_f64_iter(&mut w, r2.iter().copied());
                }
            }
        }
    }
    Ok(w.into_bytes())
}

fn write_pca(w: &mut ByteWriter, pca: &PcaModel) -> Result<()> {
    write_usize_u32(w, pca.input_dim(), "pca dim")?;
    write_usize_u32(w, pca.k(), "pca width")?;
    put_f64_iter(w, pca.mean().iter().copied());
    put_f64_iter(w, pca.basis().iter().copied());
    put_f64_iter(w, pca.eigenvalues().iter().copied());
    Ok(())
}

/// Parses and validates a model from UTHM bytes; every structural and
/// numerical invariant is re-checked.
pub fn model_from_bytes(bytes: &[u8]) -> Result<SavedModel> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(MODEL_MAGIC)?;
    let version = r.read_u32("model version")?;
    if version != MODEL_VERSION {
        return Err(UthError::format(
            r.pos() - 4,
            format!("unsupported model version {version}"),
        ));
    }
    let tag = r.read_string("method tag")?;
    let model = if tag == SRBM_TAG {
        let n_layers = r.read_u32("layer count")? as usize;
        if n_layers == 0 {
            return Err(UthError::format(r.pos() - 4, "model has zero layers"));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let n_vis = r.read_u32("layer visible width")? as usize;
            let n_hid = r.read_u32("layer hidden width")? as usize;
            let n_w = n_vis.checked_mul(n_hid).ok_or_else(|| {
                UthError::format(r.pos(), "layer size overflow")
            })?;
            let weights = widen(r.read_f32_vec(n_w, "layer weights")?);
            let bias_vis = widen(r.read_f32_vec(n_vis, "visible biases")?);
            let bias_hid = widen(r.read_f32_vec(n_hid, "hidden biases")?);
            let weights = Array2::from_shape_vec((n_vis, n_hid), weights)
                .expect("length checked by the reader");
            layers.push(RbmLayer::new(
                weights,
                Array1::from_vec(bias_vis),
                Array1::from_vec(bias_hid),
            )?);
        }
        SavedModel::Srbm(SrbmStack::new(layers)?)
    } else {
        let method: BaselineMethod = tag.parse().map_err(|_| {
            UthError::format(r.pos(), format!("unknown model tag '{tag}'"))
        })?;
        let n_bits = r.read_u32("n_bits")? as usize;
        let kind = match method {
            BaselineMethod::Lsh => {
                let dim = r.read_u32("dim")? as usize;
                let projections = read_mat(&mut r, dim, n_bits, "projections")?;
                HasherKind::Lsh { projections }
            }
            BaselineMethod::Sklsh => {
                let dim = r.read_u32("dim")? as usize;
                let gamma = r.read_f64("gamma")?;
                let w = read_mat(&mut r, dim, n_bits, "projections")?;
                let b = Array1::from_vec(r.read_f64_vec(n_bits, "phases")?);
                let t = Array1::from_vec(r.read_f64_vec(n_bits, "offsets")?);
                HasherKind::Sklsh { w, b, t, gamma }
            }
            BaselineMethod::Sh => {
                let pca = read_pca(&mut r)?;
                let mut ranges = Vec::with_capacity(pca.k());
                for _ in 0..pca.k() {
                    let a = r.read_f64("range low")?;
                    let b = r.read_f64("range high")?;
                    ranges.push((a, b));
                }
                let mut modes = Vec::with_capacity(n_bits);
                for _ in 0..n_bits {
                    let d = r.read_u32("mode direction")?;
                    let j = r.read_u32("mode harmonic")?;
                    modes.push((d, j));
                }
                HasherKind::Sh { pca, ranges, modes }
            }
            BaselineMethod::PcaHash | BaselineMethod::Itq => {
                let pca = read_pca(&mut r)?;
                let rotation = read_mat(&mut r, n_bits, n_bits, "rotation")?;
                if method == BaselineMethod::PcaHash {
                    HasherKind::PcaHash { pca, rotation }
                } else {
                    HasherKind::Itq { pca, rotation }
                }
            }
            BaselineMethod::Bpbc => {
                let d1 = r.read_u32("bpbc d1")? as usize;
                let d2 = r.read_u32("bpbc d2")? as usize;
                let r1 = read_mat(&mut r, d1, d1, "bpbc r1")?;
                let r2 = read_mat(&mut r, d2, d2, "bpbc r2")?;
                HasherKind::Bpbc { d1, d2, r1, r2 }
            }
        };
        SavedModel::Baseline(HasherModel::new(n_bits, kind)?)
    };
    r.finish()?;
    Ok(model)
}

fn widen(v: Vec<f32>) -> Vec<f64> {
    v.into_iter().map(f64::from).collect()
}

fn read_mat(r: &mut ByteReader, rows: usize, cols: usize, what: &str) -> Result<Array2<f64>> {
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| UthError::format(r.pos(), format!("{what} size overflow")))?;
    let data = r.read_f64_vec(n, what)?;
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked by the reader"))
}

fn read_pca(r: &mut ByteReader) -> Result<PcaModel> {
    let dim = r.read_u32("pca dim")? as usize;
    let k = r.read_u32("pca width")? as usize;
    let mean = Array1::from_vec(r.read_f64_vec(dim, "pca mean")?);
    let basis = read_mat(r, dim, k, "pca basis")?;
    let eigenvalues = r.read_f64_vec(k, "pca eigenvalues")?;
    PcaModel::from_parts(mean, basis, eigenvalues)
}

pub fn save_model(model: &SavedModel, path: impl AsRef<std::path::Path>) -> Result<()> {
    Ok(std::fs::write(path, model_to_bytes(model)?)?)
}

pub fn load_model(path: impl AsRef<std::path::Path>) -> Result<SavedModel> {
    model_from_bytes(&std::fs::read(path)?)
}
