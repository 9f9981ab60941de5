//! Datasets: IDX parsing, generators, splits and mini-batching.
//!
//! Image features are stored as `pixel / 255`, so writing a dataset back to
//! IDX and reloading it reproduces every feature bit for bit.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams, Rng};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

pub const DIGIT_SIDE: usize = 28;
pub const DIGIT_FEATURES: usize = DIGIT_SIDE * DIGIT_SIDE;
pub const DIGIT_CLASSES: usize = 10;

/// Row-major `n × d` features with labels in `[0, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    d: usize,
    k: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, d: usize, k: usize) -> Result<Self> {
        if labels.is_empty() || d == 0 {
            return Err(Error::EmptyVector);
        }
        if features.len() != labels.len() * d {
            return Err(Error::DimMismatch {
                expected: labels.len() * d,
                actual: features.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        if let Some(index) = features.iter().position(|f| !f.is_finite()) {
            return Err(Error::NonFinite { what: "features", index });
        }
        Ok(Dataset { features, labels, d, k })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(rows.len() * self.d);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.n() {
                return Err(Error::DimMismatch { expected: self.n(), actual: r });
            }
            features.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        Dataset::new(features, labels, self.d, self.k)
    }
}

/// Row indices into a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch(Vec<usize>);

impl Batch {
    pub fn new(indices: Vec<usize>) -> Self {
        Batch(indices)
    }

    /// Rejects duplicates and indices `≥ n`.
    pub fn checked(indices: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n || seen[i] {
                return Err(Error::InvalidModel(format!("batch index {i} is out of range or repeated")));
            }
            seen[i] = true;
        }
        Ok(Batch(indices))
    }

    pub fn all(ds: &Dataset) -> Self {
        Batch((0..ds.n()).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_batch_size(n: usize, batch_size: usize) -> Result<()> {
    if batch_size == 0 || batch_size > n {
        return Err(Error::config("batch_size", format!("must be in [1, {n}], got {batch_size}")));
    }
    Ok(())
}

fn chunk(order: Vec<usize>, batch_size: usize) -> Vec<Batch> {
    order.chunks(batch_size).map(|c| Batch(c.to_vec())).collect()
}

/// One epoch: a seeded permutation of all rows, chunked; the last chunk may
/// be short.
pub fn batches(ds: &Dataset, batch_size: usize, epoch_seed: u64) -> Result<Vec<Batch>> {
    check_batch_size(ds.n(), batch_size)?;
    let mut order: Vec<usize> = (0..ds.n()).collect();
    order.shuffle(&mut rng::stream(epoch_seed, streams::BATCH));
    Ok(chunk(order, batch_size))
}

/// Endless mini-batches: epochs are reshuffled from one seeded stream.
#[derive(Debug, Clone)]
pub struct BatchStream {
    n: usize,
    batch_size: usize,
    rng: Rng,
    pending: std::vec::IntoIter<Batch>,
    epochs: u64,
}

impl BatchStream {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        check_batch_size(n, batch_size)?;
        Ok(BatchStream {
            n,
            batch_size,
            rng: rng::stream(seed, streams::BATCH),
            pending: Vec::new().into_iter(),
            epochs: 0,
        })
    }

    pub fn epochs_started(&self) -> u64 {
        self.epochs
    }
}

impl Iterator for BatchStream {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if let Some(b) = self.pending.next() {
            return Some(b);
        }
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(&mut self.rng);
        self.epochs += 1;
        self.pending = chunk(order, self.batch_size).into_iter();
        self.pending.next()
    }
}

/// Stratified sample of `m` rows without replacement.
///
/// Class quotas follow largest-remainder apportionment of `m`, so each class
/// gets within one row of its proportional share; when `m` is at least the
/// number of populated classes, every populated class gets at least one row
/// unless that would push another class more than one row off its share.
pub fn subsample(ds: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    ds.select(&subsample_rows(ds, m, seed)?)
}

/// Stratified `(train, rest)` partition with exactly `n_train` training rows.
pub fn stratified_split(ds: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n_train >= ds.n() {
        return Err(Error::config("n_train", format!("must be below the {} available rows", ds.n())));
    }
    let train = subsample_rows(ds, n_train, seed)?;
    let mut taken = vec![false; ds.n()];
    for &r in &train {
        taken[r] = true;
    }
    let rest: Vec<usize> = (0..ds.n()).filter(|&r| !taken[r]).collect();
    Ok((ds.select(&train)?, ds.select(&rest)?))
}

/// Sorted row indices of a stratified sample; see [`subsample`].
pub fn subsample_rows(ds: &Dataset, m: usize, seed: u64) -> Result<Vec<usize>> {
    let n = ds.n();
    if m == 0 || m > n {
        return Err(Error::config("subsample", format!("size must be in [1, {n}], got {m}")));
    }
    let counts = ds.class_counts();
    let exact: Vec<f64> = counts.iter().map(|&c| m as f64 * c as f64 / n as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut by_remainder: Vec<usize> = (0..ds.k()).collect();
    by_remainder.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = m - quota.iter().sum::<usize>();
    for &c in &by_remainder {
        if left == 0 {
            break;
        }
        if quota[c] < counts[c] {
            quota[c] += 1;
            left -= 1;
        }
    }

    let populated = counts.iter().filter(|&&c| c > 0).count();
    if m >= populated {
        while let Some(empty) = (0..ds.k()).find(|&c| counts[c] > 0 && quota[c] == 0) {
            let donor = (0..ds.k())
                .filter(|&c| quota[c] > 1 && quota[c] as f64 >= exact[c])
                .max_by(|&a, &b| (quota[a] as f64 - exact[a]).total_cmp(&(quota[b] as f64 - exact[b])));
            // the ±1 share bound wins over the floor
            let Some(donor) = donor else { break };
            quota[donor] -= 1;
            quota[empty] += 1;
        }
    }

    let mut r = rng::stream(seed, streams::SPLIT);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.k()];
    for i in 0..n {
        by_class[ds.label(i)].push(i);
    }
    let mut rows = Vec::with_capacity(m);
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut r);
        rows.extend_from_slice(&members[..quota[c]]);
    }
    rows.sort_unstable();
    Ok(rows)
}

/// Seeded split into `(train, validation)` with `round(n·train_fraction)`
/// training rows.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train_fraction", "must lie strictly between 0 and 1"));
    }
    let n_train = (ds.n() as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == ds.n() {
        return Err(Error::config("train_fraction", "leaves an empty side"));
    }
    let mut order: Vec<usize> = (0..ds.n()).collect();
    order.shuffle(&mut rng::stream(seed, streams::SPLIT));
    Ok((ds.select(&order[..n_train])?, ds.select(&order[n_train..])?))
}

/// Line `w1·x + w2·y + b = 0`; points with positive value are class 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub w1: f64,
    pub w2: f64,
    pub b: f64,
}

impl Boundary {
    pub fn classify(&self, x: &[f64]) -> usize {
        usize::from(self.w1 * x[0] + self.w2 * x[1] + self.b > 0.0)
    }
}

/// `n` points uniform on `[−1,1]²`, labelled by a random line through a
/// point within 0.2 of the origin, each label flipped independently with
/// probability `flip`.
pub fn gen_noisy_2d(n: usize, flip: f64, seed: u64) -> Result<(Dataset, Boundary)> {
    if n == 0 {
        return Err(Error::config("n", "must be at least 1"));
    }
    if !(0.0..0.5).contains(&flip) {
        return Err(Error::config("flip", format!("must be in [0, 0.5), got {flip}")));
    }
    let mut r = rng::stream(seed, streams::DATA);
    let theta = r.gen_range(0.0..std::f64::consts::TAU);
    let (cx, cy) = (r.gen_range(-0.2..0.2), r.gen_range(-0.2..0.2));
    let (w1, w2) = (theta.cos(), theta.sin());
    let boundary = Boundary { w1, w2, b: -(w1 * cx + w2 * cy) };

    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let p = [r.gen_range(-1.0..=1.0), r.gen_range(-1.0..=1.0)];
        let clean = boundary.classify(&p);
        let flipped = r.gen::<f64>() < flip;
        features.extend_from_slice(&p);
        labels.push(if flipped { 1 - clean } else { clean });
    }
    Ok((Dataset::new(features, labels, 2, 2)?, boundary))
}

/// Seeded stand-in for MNIST: ten blurred stroke templates; each sample is
/// its class template shifted by up to three pixels, dimmed, overlaid with
/// one random distractor stroke and speckle, then quantized to 8-bit levels.
pub fn synthetic_digits(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::config("synthetic_digits", "must be at least 1"));
    }
    let mut r = rng::stream(seed, streams::DATA);
    let templates: Vec<Vec<f64>> = (0..DIGIT_CLASSES).map(|_| digit_template(&mut r)).collect();
    let side = DIGIT_SIDE as i64;
    let mut features = Vec::with_capacity(n * DIGIT_FEATURES);
    let mut labels = Vec::with_capacity(n);
    let mut distractor = vec![0.0; DIGIT_FEATURES];
    for i in 0..n {
        let class = i % DIGIT_CLASSES;
        let (dx, dy) = (r.gen_range(-3..=3i64), r.gen_range(-3..=3i64));
        let gain = r.gen_range(0.5..1.0);
        distractor.iter_mut().for_each(|v| *v = 0.0);
        let strength = r.gen_range(0.3..0.9);
        let ends = [r.gen_range(2.0..26.0), r.gen_range(2.0..26.0), r.gen_range(2.0..26.0), r.gen_range(2.0..26.0)];
        draw_segment(&mut distractor, ends, 1.0, strength);
        for y in 0..side {
            for x in 0..side {
                let (sx, sy) = (x - dx, y - dy);
                let base = if (0..side).contains(&sx) && (0..side).contains(&sy) {
                    templates[class][(sy * side + sx) as usize]
                } else {
                    0.0
                };
                let speckle = if r.gen::<f64>() < 0.08 { r.gen_range(0.0..0.7) } else { 0.0 };
                let d = distractor[(y * side + x) as usize];
                let v = (gain * base).max(d) + speckle;
                features.push((v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
            }
        }
        labels.push(class);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    Dataset::new(features, labels, DIGIT_FEATURES, DIGIT_CLASSES)?.select(&order)
}

/// Sets pixels within `radius` of the segment `[x0, y0, x1, y1]` to at
/// least `value`.
fn draw_segment(canvas: &mut [f64], [x0, y0, x1, y1]: [f64; 4], radius: f64, value: f64) {
    let side = DIGIT_SIDE as i64;
    let (len2, r2) = ((x1 - x0).powi(2) + (y1 - y0).powi(2), radius * radius);
    let lo_x = (x0.min(x1) - radius).floor().max(0.0) as i64;
    let hi_x = (x0.max(x1) + radius).ceil().min((side - 1) as f64) as i64;
    let lo_y = (y0.min(y1) - radius).floor().max(0.0) as i64;
    let hi_y = (y0.max(y1) + radius).ceil().min((side - 1) as f64) as i64;
    for y in lo_y..=hi_y {
        for x in lo_x..=hi_x {
            let (px, py) = (x as f64, y as f64);
            let u = if len2 > 0.0 {
                (((px - x0) * (x1 - x0) + (py - y0) * (y1 - y0)) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (cx, cy) = (x0 + u * (x1 - x0), y0 + u * (y1 - y0));
            if (px - cx).powi(2) + (py - cy).powi(2) <= r2 {
                let cell = &mut canvas[(y * side + x) as usize];
                *cell = cell.max(value);
            }
        }
    }
}

/// Three thick random strokes in the central 20×20 window, box-blurred and
/// normalized to peak 1.
fn digit_template(r: &mut Rng) -> Vec<f64> {
    let side = DIGIT_SIDE;
    let mut canvas = vec![0.0f64; DIGIT_FEATURES];
    for _ in 0..3 {
        let ends = [r.gen_range(4.0..24.0), r.gen_range(4.0..24.0), r.gen_range(4.0..24.0), r.gen_range(4.0..24.0)];
        draw_segment(&mut canvas, ends, 1.5, 1.0);
    }
    let mut blurred = vec![0.0; DIGIT_FEATURES];
    for y in 0..side as i64 {
        for x in 0..side as i64 {
            let mut acc = 0.0;
            let mut cnt = 0.0;
            for oy in -1..=1 {
                for ox in -1..=1 {
                    let (sx, sy) = (x + ox, y + oy);
                    if (0..side as i64).contains(&sx) && (0..side as i64).contains(&sy) {
                        acc += canvas[(sy as usize) * side + sx as usize];
                        cnt += 1.0;
                    }
                }
            }
            blurred[(y as usize) * side + x as usize] = acc / cnt;
        }
    }
    let peak = blurred.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    blurred.iter().map(|v| v / peak).collect()
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile(format!("{}: header", path.display())))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::DatasetMissing(path.to_path_buf()));
    }
    Ok(fs::read(path)?)
}

/// Loads an IDX image/label pair with ten classes; pixels become `p / 255`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_file(ip)?;
    let labels = read_file(lp)?;

    let magic = read_u32(&images, 0, ip)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic { expected: IDX_IMAGES_MAGIC, found: magic });
    }
    let count = read_u32(&images, 4, ip)? as usize;
    let rows = read_u32(&images, 8, ip)? as usize;
    let cols = read_u32(&images, 12, ip)? as usize;
    let d = rows * cols;
    let pixels = images
        .get(16..16 + count * d)
        .ok_or_else(|| Error::TruncatedFile(format!("{}: expected {count} images of {d} pixels", ip.display())))?;

    let magic = read_u32(&labels, 0, lp)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic { expected: IDX_LABELS_MAGIC, found: magic });
    }
    let label_count = read_u32(&labels, 4, lp)? as usize;
    if label_count != count {
        return Err(Error::CountMismatch { images: count, labels: label_count });
    }
    let label_bytes = labels
        .get(8..8 + count)
        .ok_or_else(|| Error::TruncatedFile(format!("{}: expected {count} labels", lp.display())))?;

    let features = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels = label_bytes.iter().map(|&l| usize::from(l)).collect();
    Dataset::new(features, labels, d, DIGIT_CLASSES)
}

/// Writes a dataset as an IDX pair with `rows × cols` images. Features must
/// lie in `[0, 1]`; they are stored as `round(255·f)`.
pub fn write_idx(
    ds: &Dataset,
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    if rows * cols != ds.d() {
        return Err(Error::DimMismatch { expected: ds.d(), actual: rows * cols });
    }
    if ds.k() > 256 {
        return Err(Error::config("classes", "IDX labels are single bytes"));
    }
    let as_u32 = |v: usize| u32::try_from(v).map_err(|_| Error::config("idx", "dimension exceeds u32"));
    let mut img = Vec::with_capacity(16 + ds.features().len());
    for word in [IDX_IMAGES_MAGIC, as_u32(ds.n())?, as_u32(rows)?, as_u32(cols)?] {
        img.extend_from_slice(&word.to_be_bytes());
    }
    for (index, &f) in ds.features().iter().enumerate() {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::NonFinite { what: "pixel in [0,1]", index });
        }
        img.push((f * 255.0).round() as u8);
    }
    let mut lab = Vec::with_capacity(8 + ds.n());
    for word in [IDX_LABELS_MAGIC, as_u32(ds.n())?] {
        lab.extend_from_slice(&word.to_be_bytes());
    }
    lab.extend(ds.labels().iter().map(|&l| l as u8));
    fs::write(images_path, img)?;
    fs::write(labels_path, lab)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(name: &str) -> std::path::PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
    }

    fn toy(n: usize, k: usize) -> Dataset {
        let features = (0..n).map(|i| i as f64).collect();
        let labels = (0..n).map(|i| i % k).collect();
        Dataset::new(features, labels, 1, k).unwrap()
    }

    #[test]
    fn dataset_validation() {
        assert!(matches!(
            Dataset::new(vec![0.0], vec![3], 1, 3),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
        assert!(Dataset::new(vec![0.0, 1.0], vec![0], 1, 2).is_err());
        assert!(Dataset::new(vec![], vec![], 1, 2).is_err());
    }

    #[test]
    fn one_pixel_fixture_scales_to_one() {
        let ds = load_idx(fixture("one-255-images.idx3"), fixture("one-255-labels.idx1")).unwrap();
        assert_eq!((ds.n(), ds.d()), (1, 1));
        assert_eq!(ds.row(0), &[1.0]);
        assert_eq!(ds.label(0), 7);
    }

    #[test]
    fn truncated_and_bad_magic() {
        assert!(matches!(
            load_idx(fixture("truncated-images.idx3"), fixture("one-255-labels.idx1")),
            Err(Error::TruncatedFile(_))
        ));
        assert!(matches!(
            load_idx(fixture("one-255-labels.idx1"), fixture("one-255-labels.idx1")),
            Err(Error::BadMagic { expected: IDX_IMAGES_MAGIC, found: IDX_LABELS_MAGIC })
        ));
        assert!(matches!(
            load_idx(fixture("missing.idx3"), fixture("one-255-labels.idx1")),
            Err(Error::DatasetMissing(_))
        ));
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synthetic_digits(3, 1).unwrap();
        let (i, l) = (dir.path().join("i"), dir.path().join("l"));
        write_idx(&ds, 28, 28, &i, &l).unwrap();
        let other = dir.path().join("l2");
        write_idx(&synthetic_digits(2, 1).unwrap(), 28, 28, dir.path().join("i2"), &other).unwrap();
        assert!(matches!(load_idx(&i, &other), Err(Error::CountMismatch { images: 3, labels: 2 })));
    }

    #[test]
    fn idx_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synthetic_digits(50, 4).unwrap();
        let (i, l) = (dir.path().join("i"), dir.path().join("l"));
        write_idx(&ds, 28, 28, &i, &l).unwrap();
        let back = load_idx(&i, &l).unwrap();
        assert_eq!(back.labels(), ds.labels());
        assert!(back.features().iter().zip(ds.features()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn chunk_sizes() {
        let sizes: Vec<usize> = batches(&toy(5, 2), 2, 0).unwrap().iter().map(Batch::len).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
        let full = batches(&toy(5, 2), 5, 0).unwrap();
        assert_eq!(full.len(), 1);
        let mut rows = full[0].indices().to_vec();
        rows.sort_unstable();
        assert_eq!(rows, vec![0, 1, 2, 3, 4]);
        assert!(batches(&toy(5, 2), 6, 0).is_err());
        assert!(batches(&toy(5, 2), 0, 0).is_err());
    }

    #[test]
    fn epoch_seeds_differ() {
        let ds = toy(16, 2);
        assert_ne!(batches(&ds, 16, 1).unwrap(), batches(&ds, 16, 2).unwrap());
        assert_eq!(batches(&ds, 4, 9).unwrap(), batches(&ds, 4, 9).unwrap());
    }

    #[test]
    fn batch_stream_covers_each_epoch() {
        let mut s = BatchStream::new(10, 4, 3).unwrap();
        for _ in 0..2 {
            let mut rows: Vec<usize> = (0..3).flat_map(|_| s.next().unwrap().indices().to_vec()).collect();
            rows.sort_unstable();
            assert_eq!(rows, (0..10).collect::<Vec<_>>());
        }
        assert_eq!(s.epochs_started(), 2);
        assert!(Batch::checked(vec![1, 1], 3).is_err());
        assert!(Batch::checked(vec![3], 3).is_err());
    }

    #[test]
    fn subsample_examples() {
        let ds = toy(30, 3);
        let all = subsample(&ds, 30, 5).unwrap();
        let mut a = all.features().to_vec();
        a.sort_by(f64::total_cmp);
        assert_eq!(a, ds.features());

        let one_each = subsample(&ds, 3, 5).unwrap();
        assert_eq!(one_each.class_counts(), vec![1, 1, 1]);
        assert_eq!(subsample(&ds, 7, 5).unwrap(), subsample(&ds, 7, 5).unwrap());
        assert!(subsample(&ds, 0, 5).is_err());
    }

    #[test]
    fn subsample_is_stratified_with_unequal_classes() {
        let labels: Vec<usize> = (0..100).map(|i| if i < 70 { 0 } else if i < 95 { 1 } else { 2 }).collect();
        let ds = Dataset::new((0..100).map(f64::from).collect(), labels, 1, 3).unwrap();
        for m in [3, 10, 33, 50, 99] {
            let counts = subsample(&ds, m, 2).unwrap().class_counts();
            assert_eq!(counts.iter().sum::<usize>(), m);
            for (c, &total) in ds.class_counts().iter().enumerate() {
                let share = m as f64 * total as f64 / 100.0;
                assert!((counts[c] as f64 - share).abs() <= 1.0, "m={m} class={c} {counts:?}");
            }
        }
    }

    #[test]
    fn stratified_split_is_a_partition() {
        let ds = toy(30, 3);
        let (tr, rest) = stratified_split(&ds, 12, 4).unwrap();
        assert_eq!(tr.class_counts(), vec![4, 4, 4]);
        let mut all: Vec<f64> = tr.features().iter().chain(rest.features()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, ds.features());
        assert!(stratified_split(&ds, 30, 4).is_err());
    }

    #[test]
    fn split_partitions_rows() {
        let ds = toy(10, 2);
        let (tr, va) = split(&ds, 0.8, 1).unwrap();
        assert_eq!((tr.n(), va.n()), (8, 2));
        let mut all: Vec<f64> = tr.features().iter().chain(va.features()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, ds.features());
    }

    #[test]
    fn noise_free_labels_match_boundary() {
        let (ds, b) = gen_noisy_2d(2000, 0.0, 3).unwrap();
        for i in 0..ds.n() {
            assert_eq!(ds.label(i), b.classify(ds.row(i)));
            assert!(ds.row(i).iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        assert_eq!(gen_noisy_2d(100, 0.1, 8).unwrap(), gen_noisy_2d(100, 0.1, 8).unwrap());
        assert!(gen_noisy_2d(10, 0.5, 0).is_err());
    }

    #[test]
    fn flip_rate_and_independence() {
        let (ds, b) = gen_noisy_2d(100_000, 0.1, 12).unwrap();
        let flipped: Vec<bool> = (0..ds.n()).map(|i| ds.label(i) != b.classify(ds.row(i))).collect();
        let rate = flipped.iter().filter(|&&f| f).count() as f64 / ds.n() as f64;
        assert!((rate - 0.10).abs() <= 0.01, "{rate}");

        // 2×2 table of flips on even rows against the following odd rows.
        let mut table = [[0.0f64; 2]; 2];
        for pair in flipped.chunks(2) {
            table[usize::from(pair[0])][usize::from(pair[1])] += 1.0;
        }
        let total: f64 = table.iter().flatten().sum();
        let mut chi2 = 0.0;
        for a in 0..2 {
            for c in 0..2 {
                let row: f64 = table[a].iter().sum();
                let col = table[0][c] + table[1][c];
                let expect = row * col / total;
                chi2 += (table[a][c] - expect).powi(2) / expect;
            }
        }
        // chi-square with one degree of freedom at p = 0.001
        assert!(chi2 < 10.828, "{chi2}");
    }

    #[test]
    fn digits_shape() {
        let ds = synthetic_digits(40, 2).unwrap();
        assert_eq!((ds.d(), ds.k()), (784, 10));
        assert_eq!(ds.class_counts(), vec![4; 10]);
        assert!(ds.features().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(ds, synthetic_digits(40, 2).unwrap());
    }
}
