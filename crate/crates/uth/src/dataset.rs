//! Descriptor datasets, binary code sets, ground truth, and their on-disk
//! formats.
//!
//! Descriptor file (`UTHD`):
//!
//! ```text
//! magic   4 bytes  "UTHD"
//! version u32 LE   1
//! count   u32 LE   number of rows
//! dim     u32 LE   descriptor dimensionality, >= 1
//! data    count * dim * f32 LE, row-major
//! ids     count entries: len u16 LE, then len bytes UTF-8
//! ```
//!
//! Code file (`UTHB`): same frame with `n_bits` in place of `dim` and
//! `ceil(n_bits / 8)` bytes per row. Bit `j` of a code lives in byte
//! `j / 8` at bit position `j % 8` (LSB-first); trailing pad bits are zero.
//!
//! Ground truth is a text file: one query per line,
//! `query_id<TAB>relevant_id1,relevant_id2,...`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, UthError};
use crate::wire::{ByteReader, ByteWriter};

const DESCRIPTOR_MAGIC: &[u8; 4] = b"UTHD";
const CODE_MAGIC: &[u8; 4] = b"UTHB";
const FORMAT_VERSION: u32 = 1;

/// Input format accepted by [`load_descriptors`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorFormat {
    /// The `UTHD` binary layout.
    Binary,
    /// Text rows `id,v1,...,vd` with a consistent dimensionality.
    Csv,
}

/// A set of real-valued descriptors with one string id per row.
#[derive(Debug, Clone)]
pub struct DescriptorDataset {
    ids: Vec<String>,
    data: Array2<f32>,
    /// Per-dimension (min, max) recorded by min-max normalization, if this
    /// dataset has been normalized. Not persisted by the binary format.
    norm_meta: Option<Vec<(f32, f32)>>,
}

impl DescriptorDataset {
    /// Builds a dataset, validating id uniqueness and value finiteness.
    pub fn new(ids: Vec<String>, data: Array2<f32>) -> Result<Self> {
        if ids.len() != data.nrows() {
            return Err(UthError::Argument(format!(
                "id count {} does not match row count {}",
                ids.len(),
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(UthError::Argument(
                "descriptor dimensionality must be at least 1".into(),
            ));
        }
        validate_ids(&ids)?;
        for (row, id) in data.axis_iter(Axis(0)).zip(&ids) {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(UthError::Validation(format!(
                    "descriptor row '{id}' contains a non-finite value"
                )));
            }
        }
        Ok(DescriptorDataset {
            ids,
            data,
            norm_meta: None,
        })
    }

    pub fn count(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> ArrayView2<'_, f32> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.data.row(i)
    }

    /// Per-dimension (min, max) captured when this dataset was produced by
    /// [`DescriptorDataset::normalize_minmax`].
    pub fn norm_meta(&self) -> Option<&[(f32, f32)]> {
        self.norm_meta.as_deref()
    }

    pub fn set_norm_meta(&mut self, meta: Option<Vec<(f32, f32)>>) -> Result<()> {
        if let Some(m) = &meta {
            if m.len() != self.dim() {
                return Err(UthError::Argument(format!(
                    "normalization metadata has {} entries for dimensionality {}",
                    m.len(),
                    self.dim()
                )));
            }
        }
        self.norm_meta = meta;
        Ok(())
    }

    /// Row lookup table keyed by id.
    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// The data as f64, the precision used by all model arithmetic.
    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    /// Rescales every dimension to [0, 1] independently and records the
    /// per-dimension (min, max). Constant dimensions map to 0. Requires at
    /// least two rows and at least one non-constant dimension.
    pub fn normalize_minmax(&self) -> Result<DescriptorDataset> {
        if self.count() < 2 {
            return Err(UthError::Argument(format!(
                "min-max normalization needs at least 2 rows, got {}",
                self.count()
            )));
        }
        let mut meta = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            let col = self.data.column(d);
            let mut lo = f32::INFINITY;
            let mut hi = f32::NEG_INFINITY;
            for &v in col {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            meta.push((lo, hi));
        }
        if meta.iter().all(|(lo, hi)| hi <= lo) {
            return Err(UthError::Argument(
                "every dimension is constant; nothing to normalize".into(),
            ));
        }
        let mut out = self.data.clone();
        for (d, &(lo, hi)) in meta.iter().enumerate() {
            let range = hi - lo;
            let mut col = out.column_mut(d);
            if range > 0.0 {
                col.mapv_inplace(|v| (v - lo) / range);
            } else {
                col.fill(0.0);
            }
        }
        let mut ds = DescriptorDataset::new(self.ids.clone(), out)?;
        ds.norm_meta = Some(meta);
        Ok(ds)
    }

    /// Splits rows into disjoint train/test subsets. `fractions` must be
    /// positive and sum to 1; the train size is `round(f_train * count)`.
    /// The permutation is drawn from a seeded RNG, so a (dataset, seed)
    /// pair always produces the same split.
    pub fn split(&self, fractions: (f64, f64), seed: u64) -> Result<(Self, Self)> {
        let (f_train, f_test) = fractions;
        if !(f_train > 0.0 && f_test > 0.0) {
            return Err(UthError::Argument(format!(
                "split fractions must be positive, got ({f_train}, {f_test})"
            )));
        }
        if (f_train + f_test - 1.0).abs() > 1e-9 {
            return Err(UthError::Argument(format!(
                "split fractions must sum to 1, got {}",
                f_train + f_test
            )));
        }
        let mut order: Vec<usize> = (0..self.count()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let n_train = (f_train * self.count() as f64).round() as usize;
        let n_train = n_train.min(self.count());
        let mut train_idx = order[..n_train].to_vec();
        let mut test_idx = order[n_train..].to_vec();
        // Keep each side in original row order so the split is a stable
        // selection rather than a reshuffle.
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        Ok((self.subset(&train_idx)?, self.subset(&test_idx)?))
    }

    /// Selects rows by index, preserving order and normalization metadata.
    pub fn subset(&self, indices: &[usize]) -> Result<DescriptorDataset> {
        let mut ids = Vec::with_capacity(indices.len());
        let mut data = Array2::zeros((indices.len(), self.dim()));
        for (out_row, &i) in indices.iter().enumerate() {
            if i >= self.count() {
                return Err(UthError::Argument(format!(
                    "subset index {i} out of range for {} rows",
                    self.count()
                )));
            }
            ids.push(self.ids[i].clone());
            data.row_mut(out_row).assign(&self.data.row(i));
        }
        let mut ds = DescriptorDataset::new(ids, data)?;
        ds.norm_meta = self.norm_meta.clone();
        Ok(ds)
    }
}

fn validate_ids(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if id.is_empty() {
            return Err(UthError::Validation("empty id".into()));
        }
        if !seen.insert(id.as_str()) {
            return Err(UthError::Validation(format!("duplicate id '{id}'")));
        }
    }
    Ok(())
}

/// Loads descriptors from the binary `UTHD` layout or from CSV.
pub fn load_descriptors(path: &Path, format: DescriptorFormat) -> Result<DescriptorDataset> {
    match format {
        DescriptorFormat::Binary => decode_descriptors(&fs::read(path)?),
        DescriptorFormat::Csv => parse_descriptor_csv(&fs::read_to_string(path)?),
    }
}

/// Writes the binary `UTHD` layout. Normalization metadata is not part of
/// the format and is dropped; callers that need it must keep it separately.
pub fn save_descriptors(dataset: &DescriptorDataset, path: &Path) -> Result<()> {
    let mut w = ByteWriter::new();
    w.put_bytes(DESCRIPTOR_MAGIC);
    w.put_u32(FORMAT_VERSION);
    w.put_u32(count_u32(dataset.count())?);
    w.put_u32(count_u32(dataset.dim())?);
    for v in dataset.data.iter() {
        w.put_f32(*v);
    }
    for id in dataset.ids() {
        w.put_string(id)?;
    }
    fs::write(path, w.into_bytes())?;
    Ok(())
}

fn count_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| UthError::Argument(format!("{n} does not fit in u32")))
}

fn decode_descriptors(bytes: &[u8]) -> Result<DescriptorDataset> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(DESCRIPTOR_MAGIC)?;
    let at = r.pos();
    let version = r.read_u32("version")?;
    if version != FORMAT_VERSION {
        return Err(UthError::format(
            at,
            format!("unsupported descriptor format version {version}"),
        ));
    }
    let count = r.read_u32("count")? as usize;
    let at = r.pos();
    let dim = r.read_u32("dim")? as usize;
    if dim == 0 {
        return Err(UthError::format(at, "dimensionality must be at least 1"));
    }
    let values = r.read_f32_vec(count * dim, "descriptor data")?;
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        ids.push(r.read_string("id")?);
    }
    r.finish()?;
    let data = Array2::from_shape_vec((count, dim), values)
        .expect("shape matches the vec length by construction");
    DescriptorDataset::new(ids, data)
}

fn parse_descriptor_csv(text: &str) -> Result<DescriptorDataset> {
    let mut ids = Vec::new();
    let mut values: Vec<f32> = Vec::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let n = lineno + 1;
        let mut fields = line.split(',');
        let id = fields
            .next()
            .expect("split always yields at least one field")
            .trim();
        if id.is_empty() {
            return Err(UthError::Validation(format!("csv line {n}: empty id")));
        }
        let mut row = Vec::new();
        for field in fields {
            let v: f32 = field.trim().parse().map_err(|_| {
                UthError::Validation(format!("csv line {n}: '{}' is not a number", field.trim()))
            })?;
            row.push(v);
        }
        if row.is_empty() {
            return Err(UthError::Validation(format!(
                "csv line {n}: row has no values"
            )));
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(UthError::Validation(format!(
                    "csv line {n}: row has {} values, expected {d}",
                    row.len()
                )));
            }
            Some(_) => {}
        }
        ids.push(id.to_string());
        values.extend_from_slice(&row);
    }
    let dim = dim.ok_or_else(|| UthError::Validation("csv file contains no rows".into()))?;
    let data = Array2::from_shape_vec((ids.len(), dim), values)
        .expect("shape matches the vec length by construction");
    DescriptorDataset::new(ids, data)
}

/// Binary codes with one string id per row. Codes are packed LSB-first.
#[derive(Debug, Clone)]
pub struct BinaryCodeSet {
    ids: Vec<String>,
    n_bits: usize,
    row_bytes: usize,
    codes: Vec<u8>,
}

impl BinaryCodeSet {
    /// Builds a code set from packed rows, validating lengths and that all
    /// pad bits beyond `n_bits` are zero.
    pub fn new(ids: Vec<String>, n_bits: usize, rows: Vec<Vec<u8>>) -> Result<Self> {
        if n_bits == 0 {
            return Err(UthError::Argument("code width must be at least 1 bit".into()));
        }
        if ids.len() != rows.len() {
            return Err(UthError::Argument(format!(
                "id count {} does not match row count {}",
                ids.len(),
                rows.len()
            )));
        }
        validate_ids(&ids)?;
        let row_bytes = n_bits.div_ceil(8);
        let mut codes = Vec::with_capacity(ids.len() * row_bytes);
        for (row, id) in rows.iter().zip(&ids) {
            if row.len() != row_bytes {
                return Err(UthError::Argument(format!(
                    "code row '{id}' has {} bytes, expected {row_bytes}",
                    row.len()
                )));
            }
            check_padding(row, n_bits)
                .map_err(|msg| UthError::Validation(format!("code row '{id}': {msg}")))?;
            codes.extend_from_slice(row);
        }
        Ok(BinaryCodeSet {
            ids,
            n_bits,
            row_bytes,
            codes,
        })
    }

    /// Packs rows of booleans (index = bit position).
    pub fn from_bits(ids: Vec<String>, bits: Vec<Vec<bool>>) -> Result<Self> {
        let n_bits = bits
            .first()
            .map(Vec::len)
            .ok_or_else(|| UthError::Argument("cannot pack an empty code set".into()))?;
        let rows = bits
            .iter()
            .map(|row| {
                if row.len() != n_bits {
                    return Err(UthError::Argument(format!(
                        "inconsistent code widths: {} vs {n_bits}",
                        row.len()
                    )));
                }
                Ok(pack_bits(row))
            })
            .collect::<Result<Vec<_>>>()?;
        BinaryCodeSet::new(ids, n_bits, rows)
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn row_bytes(&self) -> usize {
        self.row_bytes
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn code(&self, i: usize) -> &[u8] {
        &self.codes[i * self.row_bytes..(i + 1) * self.row_bytes]
    }

    pub fn bit(&self, row: usize, j: usize) -> bool {
        debug_assert!(j < self.n_bits);
        self.code(row)[j / 8] >> (j % 8) & 1 == 1
    }

    /// Row as booleans, one per bit.
    pub fn unpack(&self, row: usize) -> Vec<bool> {
        (0..self.n_bits).map(|j| self.bit(row, j)).collect()
    }
}

/// Packs booleans LSB-first into `ceil(len / 8)` bytes.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (j, &b) in bits.iter().enumerate() {
        if b {
            out[j / 8] |= 1 << (j % 8);
        }
    }
    out
}

fn check_padding(row: &[u8], n_bits: usize) -> std::result::Result<(), String> {
    let used = n_bits % 8;
    if used != 0 {
        let last = row[row.len() - 1];
        let mask = !((1u16 << used) as u8).wrapping_sub(1);
        if last & mask != 0 {
            return Err(format!(
                "pad bits beyond bit {n_bits} must be zero, last byte is {last:#04x}"
            ));
        }
    }
    Ok(())
}

/// Loads a `UTHB` code file.
pub fn load_codes(path: &Path) -> Result<BinaryCodeSet> {
    decode_codes(&fs::read(path)?)
}

/// Writes the `UTHB` layout.
pub fn save_codes(codes: &BinaryCodeSet, path: &Path) -> Result<()> {
    let mut w = ByteWriter::new();
    w.put_bytes(CODE_MAGIC);
    w.put_u32(FORMAT_VERSION);
    w.put_u32(count_u32(codes.count())?);
    w.put_u32(count_u32(codes.n_bits())?);
    w.put_bytes(&codes.codes);
    for id in codes.ids() {
        w.put_string(id)?;
    }
    fs::write(path, w.into_bytes())?;
    Ok(())
}

fn decode_codes(bytes: &[u8]) -> Result<BinaryCodeSet> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(CODE_MAGIC)?;
    let at = r.pos();
    let version = r.read_u32("version")?;
    if version != FORMAT_VERSION {
        return Err(UthError::format(
            at,
            format!("unsupported code format version {version}"),
        ));
    }
    let count = r.read_u32("count")? as usize;
    let at = r.pos();
    let n_bits = r.read_u32("n_bits")? as usize;
    if n_bits == 0 {
        return Err(UthError::format(at, "code width must be at least 1 bit"));
    }
    let row_bytes = n_bits.div_ceil(8);
    let code_at = r.pos();
    let packed = r.take(count * row_bytes, "code data")?.to_vec();
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        ids.push(r.read_string("id")?);
    }
    r.finish()?;
    for (i, row) in packed.chunks_exact(row_bytes.max(1)).enumerate() {
        check_padding(row, n_bits).map_err(|msg| {
            UthError::format(code_at + i * row_bytes + row_bytes - 1, msg)
        })?;
    }
    validate_ids(&ids)?;
    Ok(BinaryCodeSet {
        ids,
        n_bits,
        row_bytes,
        codes: packed,
    })
}

/// Relevance judgments: each query id maps to its non-empty set of
/// relevant database ids.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl GroundTruth {
    pub fn new(map: BTreeMap<String, BTreeSet<String>>) -> Result<Self> {
        for (q, rel) in &map {
            if rel.is_empty() {
                return Err(UthError::Validation(format!(
                    "query '{q}' has an empty relevant set"
                )));
            }
        }
        Ok(GroundTruth { map })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn relevant(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.map.get(query_id)
    }

    pub fn queries(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    /// Checks that every id mentioned anywhere resolves against `ids`.
    pub fn validate_against(&self, ids: &HashSet<&str>) -> Result<()> {
        for (q, rel) in &self.map {
            if !ids.contains(q.as_str()) {
                return Err(UthError::Validation(format!(
                    "ground truth query '{q}' is not in the dataset"
                )));
            }
            for r in rel {
                if !ids.contains(r.as_str()) {
                    return Err(UthError::Validation(format!(
                        "ground truth id '{r}' (relevant to '{q}') is not in the dataset"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parses the tab-separated ground truth format.
pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    parse_ground_truth(&fs::read_to_string(path)?)
}

fn parse_ground_truth(text: &str) -> Result<GroundTruth> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let n = lineno + 1;
        let (query, rest) = line.split_once('\t').ok_or_else(|| {
            UthError::Validation(format!("ground truth line {n}: missing tab separator"))
        })?;
        let query = query.trim();
        if query.is_empty() {
            return Err(UthError::Validation(format!(
                "ground truth line {n}: empty query id"
            )));
        }
        let mut rel = BTreeSet::new();
        for id in rest.split(',') {
            let id = id.trim();
            if id.is_empty() {
                return Err(UthError::Validation(format!(
                    "ground truth line {n}: empty relevant id"
                )));
            }
            rel.insert(id.to_string());
        }
        if map.insert(query.to_string(), rel).is_some() {
            return Err(UthError::Validation(format!(
                "ground truth line {n}: duplicate query '{query}'"
            )));
        }
    }
    GroundTruth::new(map)
}

/// Writes the tab-separated ground truth format.
pub fn save_ground_truth(gt: &GroundTruth, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (q, rel) in &gt.map {
        out.push_str(q);
        out.push('\t');
        let joined: Vec<&str> = rel.iter().map(String::as_str).collect();
        out.push_str(&joined.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small() -> DescriptorDataset {
        DescriptorDataset::new(
            vec!["a".into(), "b".into(), "c".into()],
            array![[0.0f32, 2.0, 5.0], [1.0, 2.0, 7.0], [0.5, 2.0, 6.0]],
        )
        .unwrap()
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = DescriptorDataset::new(
            vec!["a".into(), "a".into()],
            array![[1.0f32], [2.0]],
        )
        .unwrap_err();
        assert!(matches!(err, UthError::Validation(_)));
    }

    #[test]
    fn non_finite_values_name_the_row() {
        let err = DescriptorDataset::new(
            vec!["ok".into(), "bad".into()],
            array![[1.0f32], [f32::NAN]],
        )
        .unwrap_err();
        assert!(err.to_string().contains("bad"));
    }

    #[test]
    fn descriptor_round_trip_is_bit_exact() {
        let ds = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.uthd");
        save_descriptors(&ds, &path).unwrap();
        let back = load_descriptors(&path, DescriptorFormat::Binary).unwrap();
        assert_eq!(back.ids(), ds.ids());
        assert_eq!(back.data().shape(), ds.data().shape());
        for (a, b) in back.data().iter().zip(ds.data().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_descriptor_file_reports_offset() {
        let ds = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.uthd");
        save_descriptors(&ds, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        let err = decode_descriptors(&bytes).unwrap_err();
        assert!(matches!(err, UthError::Format { .. }), "{err}");
    }

    #[test]
    fn csv_parses_and_validates() {
        let ds = parse_descriptor_csv("a,1.0,2.0\nb,3.5,-4.0\n").unwrap();
        assert_eq!(ds.count(), 2);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.row(1)[1], -4.0);

        let err = parse_descriptor_csv("a,1.0\nb,1.0,2.0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));

        let err = parse_descriptor_csv("a,1.0\nb,oops\n").unwrap_err();
        assert!(err.to_string().contains("not a number"));
    }

    #[test]
    fn normalize_maps_to_unit_range_and_records_meta() {
        let ds = small();
        let normed = ds.normalize_minmax().unwrap();
        // Dimension 1 is constant and must map to 0.
        for i in 0..normed.count() {
            assert_eq!(normed.row(i)[1], 0.0);
        }
        for v in normed.data().iter() {
            assert!((0.0..=1.0).contains(v));
        }
        let meta = normed.norm_meta().unwrap();
        assert_eq!(meta[0], (0.0, 1.0));
        assert_eq!(meta[1], (2.0, 2.0));
        assert_eq!(meta[2], (5.0, 7.0));
        // Already-normalized data is a fixed point.
        let twice = normed.normalize_minmax().unwrap();
        assert_eq!(twice.data(), normed.data());
    }

    #[test]
    fn normalize_rejects_degenerate_input() {
        let one = DescriptorDataset::new(vec!["a".into()], array![[1.0f32, 2.0]]).unwrap();
        assert!(matches!(
            one.normalize_minmax().unwrap_err(),
            UthError::Argument(_)
        ));
        let flat = DescriptorDataset::new(
            vec!["a".into(), "b".into()],
            array![[3.0f32, 3.0], [3.0, 3.0]],
        )
        .unwrap();
        assert!(flat.normalize_minmax().is_err());
    }

    #[test]
    fn split_partitions_rows_deterministically() {
        let ids: Vec<String> = (0..100).map(|i| format!("r{i:03}")).collect();
        let data = Array2::from_shape_fn((100, 4), |(i, j)| (i * 7 + j) as f32);
        let ds = DescriptorDataset::new(ids, data).unwrap();
        let (tr, te) = ds.split((0.8, 0.2), 11).unwrap();
        assert_eq!(tr.count(), 80);
        assert_eq!(te.count(), 20);
        let mut all: Vec<&String> = tr.ids().iter().chain(te.ids()).collect();
        all.sort();
        let mut orig: Vec<&String> = ds.ids().iter().collect();
        orig.sort();
        assert_eq!(all, orig);

        let (tr2, _) = ds.split((0.8, 0.2), 11).unwrap();
        assert_eq!(tr.ids(), tr2.ids());
        let (tr3, _) = ds.split((0.8, 0.2), 12).unwrap();
        assert_ne!(tr.ids(), tr3.ids());
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let ds = small();
        assert!(ds.split((0.5, 0.4), 1).is_err());
        assert!(ds.split((1.0, 0.0), 1).is_err());
        assert!(ds.split((-0.2, 1.2), 1).is_err());
    }

    #[test]
    fn code_round_trip_preserves_bits_and_padding() {
        let ids = vec!["x".into(), "y".into()];
        let bits = vec![
            vec![true, false, true, true, false, true, false, true, true, false],
            vec![false, false, false, false, false, false, false, false, false, true],
        ];
        let codes = BinaryCodeSet::from_bits(ids, bits.clone()).unwrap();
        assert_eq!(codes.n_bits(), 10);
        assert_eq!(codes.row_bytes(), 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.uthb");
        save_codes(&codes, &path).unwrap();
        let back = load_codes(&path).unwrap();
        assert_eq!(back.ids(), codes.ids());
        for i in 0..2 {
            assert_eq!(back.unpack(i), bits[i]);
        }
    }

    #[test]
    fn nonzero_padding_rejected() {
        let row = vec![0xFFu8, 0xFF];
        let err = BinaryCodeSet::new(vec!["x".into()], 10, vec![row]).unwrap_err();
        assert!(err.to_string().contains("pad bits"));
    }

    #[test]
    fn bit_layout_is_lsb_first() {
        // Bit 0 set -> first byte 0x01; bit 8 set -> second byte 0x01.
        let mut bits = vec![false; 9];
        bits[0] = true;
        bits[8] = true;
        assert_eq!(pack_bits(&bits), vec![0x01, 0x01]);
    }

    #[test]
    fn ground_truth_parses_and_validates() {
        let gt = parse_ground_truth("q1\ta,b\nq2\tc\n").unwrap();
        assert_eq!(gt.len(), 2);
        assert!(gt.relevant("q1").unwrap().contains("b"));

        assert!(parse_ground_truth("q1 a,b\n").is_err());
        assert!(parse_ground_truth("q1\t\n").is_err());
        assert!(parse_ground_truth("q1\ta\nq1\tb\n").is_err());

        let ids: HashSet<&str> = ["q1", "q2", "a", "b", "c"].into_iter().collect();
        gt.validate_against(&ids).unwrap();
        let missing: HashSet<&str> = ["q1", "a", "b"].into_iter().collect();
        assert!(gt.validate_against(&missing).is_err());
    }
}
