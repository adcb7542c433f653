//! Synthetic datasets for the stealing experiments.
//!
//! Two families:
//! * `shapes` — 10×10-style grayscale images of geometric figures. The
//!   victim's *true* catalog and the attacker's *proxy* catalog are disjoint
//!   by construction: no shared samples and no shared classes.
//! * `gaussian-mixture` — low-dimensional blobs on two non-overlapping
//!   shells around the hypercube center; a fast stand-in with the same
//!   true/proxy structure for cheap tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::Path;

use crate::checkpoint::{read_container, write_container, Container};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which side of the experiment a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    TrueTrain,
    TrueTest,
    Proxy,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::TrueTrain => "true-train",
            Role::TrueTest => "true-test",
            Role::Proxy => "proxy",
        }
    }

    pub fn from_str(s: &str) -> Result<Role> {
        match s {
            "true-train" => Ok(Role::TrueTrain),
            "true-test" => Ok(Role::TrueTest),
            "proxy" => Ok(Role::Proxy),
            other => Err(Error::invalid(format!("unknown dataset role '{other}'"))),
        }
    }
}

/// The two disjoint class catalogs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Catalog {
    True,
    Proxy,
}

/// All drawable shape classes across both catalogs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    HorizontalBar,
    VerticalBar,
    Cross,
    MainDiagonal,
    CircleOutline,
    FilledSquare,
    Checkerboard,
    Triangle,
}

pub const TRUE_SHAPES: [ShapeClass; 4] = [
    ShapeClass::HorizontalBar,
    ShapeClass::VerticalBar,
    ShapeClass::Cross,
    ShapeClass::MainDiagonal,
];

pub const PROXY_SHAPES: [ShapeClass; 4] = [
    ShapeClass::CircleOutline,
    ShapeClass::FilledSquare,
    ShapeClass::Checkerboard,
    ShapeClass::Triangle,
];

impl ShapeClass {
    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::HorizontalBar => "horizontal-bar",
            ShapeClass::VerticalBar => "vertical-bar",
            ShapeClass::Cross => "cross",
            ShapeClass::MainDiagonal => "main-diagonal",
            ShapeClass::CircleOutline => "circle-outline",
            ShapeClass::FilledSquare => "filled-square",
            ShapeClass::Checkerboard => "checkerboard",
            ShapeClass::Triangle => "triangle",
        }
    }

    pub fn catalog(self) -> Catalog {
        match self {
            ShapeClass::HorizontalBar
            | ShapeClass::VerticalBar
            | ShapeClass::Cross
            | ShapeClass::MainDiagonal => Catalog::True,
            _ => Catalog::Proxy,
        }
    }
}

/// Noise-free template for a shape, row-major `side×side` in {0,1}.
pub fn shape_template(class: ShapeClass, side: usize) -> Vec<f64> {
    let mut img = vec![0.0; side * side];
    let mid = side / 2;
    let cx = (side as f64 - 1.0) / 2.0;
    let mut set = |i: usize, j: usize| img[i * side + j] = 1.0;
    match class {
        ShapeClass::HorizontalBar => {
            for j in 0..side {
                set(mid, j);
            }
        }
        ShapeClass::VerticalBar => {
            for i in 0..side {
                set(i, mid);
            }
        }
        ShapeClass::Cross => {
            for j in 0..side {
                set(mid, j);
            }
            for i in 0..side {
                set(i, mid);
            }
        }
        ShapeClass::MainDiagonal => {
            for i in 0..side {
                set(i, i);
            }
        }
        ShapeClass::CircleOutline => {
            let r = side as f64 / 2.0 - 1.5;
            for i in 0..side {
                for j in 0..side {
                    let d = ((i as f64 - cx).powi(2) + (j as f64 - cx).powi(2)).sqrt();
                    if (d - r).abs() <= 0.6 {
                        set(i, j);
                    }
                }
            }
        }
        ShapeClass::FilledSquare => {
            let lo = side / 4;
            let hi = side - side / 4;
            for i in lo..hi {
                for j in lo..hi {
                    set(i, j);
                }
            }
        }
        ShapeClass::Checkerboard => {
            for i in 0..side {
                for j in 0..side {
                    if (i / 2 + j / 2) % 2 == 0 {
                        set(i, j);
                    }
                }
            }
        }
        ShapeClass::Triangle => {
            let slope = (side as f64 / 2.0 - 1.0) / (side as f64 - 1.0);
            for i in 0..side {
                let half = 0.5 + i as f64 * slope;
                for j in 0..side {
                    if (j as f64 - cx).abs() <= half {
                        set(i, j);
                    }
                }
            }
        }
    }
    img
}

#[derive(Debug, Clone)]
pub struct ShapesSpec {
    pub classes: Vec<ShapeClass>,
    pub samples_per_class: usize,
    pub side: usize,
    pub noise_std: f64,
    /// Maximum absolute pixel shift applied independently per axis.
    pub jitter: u32,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MixtureSpec {
    pub catalog: Catalog,
    pub class_count: usize,
    pub samples_per_class: usize,
    pub dimension: usize,
    pub noise_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum DatasetSpec {
    Shapes(ShapesSpec),
    Mixture(MixtureSpec),
}

/// Feature matrix plus integer labels, all pixels/coordinates in `[0,1]`.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    images: Tensor,
    labels: Vec<usize>,
    class_names: Vec<String>,
    role: Role,
    /// Image edge length when the rows are square images, else `None`.
    side: Option<usize>,
}

impl LabeledDataset {
    pub fn new(
        images: Tensor,
        labels: Vec<usize>,
        class_names: Vec<String>,
        role: Role,
        side: Option<usize>,
    ) -> Result<Self> {
        if images.rank() != 2 {
            return Err(Error::shape("dataset images must be a rank-2 tensor"));
        }
        if images.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} image rows vs {} labels",
                images.rows(),
                labels.len()
            )));
        }
        if class_names.is_empty() {
            return Err(Error::invalid("dataset needs at least one class"));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &class_names {
            if !seen.insert(name) {
                return Err(Error::invalid(format!("duplicate class name '{name}'")));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        if images.data().iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid("dataset values must lie in [0,1]"));
        }
        if let Some(s) = side {
            if s * s != images.cols() {
                return Err(Error::shape(format!(
                    "side {s} inconsistent with {} features",
                    images.cols()
                )));
            }
        }
        Ok(LabeledDataset {
            images,
            labels,
            class_names,
            role,
            side,
        })
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn side(&self) -> Option<usize> {
        self.side
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.images.cols()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        self.images.row(i)
    }

    /// Stratified split into `(kept, held_out)`; each class contributes
    /// `round(fraction · count)` rows (at least one, never all) to the
    /// held-out side. For true-train input the held-out side becomes the
    /// true-test set.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
        use rand::seq::SliceRandom;
        if !(0.0..1.0).contains(&fraction) || fraction <= 0.0 {
            return Err(Error::invalid(format!(
                "split fraction must be in (0,1), got {fraction}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep_rows: Vec<usize> = Vec::new();
        let mut hold_rows: Vec<usize> = Vec::new();
        for class in 0..self.n_classes() {
            let mut idx: Vec<usize> = (0..self.len())
                .filter(|&i| self.labels[i] == class)
                .collect();
            if idx.len() < 2 {
                return Err(Error::invalid(format!(
                    "class '{}' has {} samples; need at least 2 to split",
                    self.class_names[class],
                    idx.len()
                )));
            }
            idx.shuffle(&mut rng);
            let want = ((fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
            let (hold, keep) = idx.split_at(want);
            let mut hold = hold.to_vec();
            let mut keep = keep.to_vec();
            hold.sort_unstable();
            keep.sort_unstable();
            hold_rows.extend(hold);
            keep_rows.extend(keep);
        }
        let hold_role = match self.role {
            Role::TrueTrain => Role::TrueTest,
            other => other,
        };
        Ok((
            self.subset(&keep_rows, self.role)?,
            self.subset(&hold_rows, hold_role)?,
        ))
    }

    fn subset(&self, rows: &[usize], role: Role) -> Result<LabeledDataset> {
        let images = crate::nn::gather_rows(&self.images, rows);
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        LabeledDataset::new(images, labels, self.class_names.clone(), role, self.side)
    }

    /// Serializes into a BBR1 container with the given extra metadata
    /// (e.g. the producing config hash).
    pub fn save(&self, path: &Path, extra_meta: &[(String, String)]) -> Result<()> {
        let mut c = Container::new();
        c.push_meta("kind", "dataset");
        c.push_meta("role", self.role.as_str());
        c.push_meta("classes", self.class_names.join(","));
        c.push_meta("side", self.side.unwrap_or(0).to_string());
        for (k, v) in extra_meta {
            c.push_meta(k.clone(), v.clone());
        }
        c.push_tensor("images", self.images.clone());
        let labels: Vec<f64> = self.labels.iter().map(|&l| l as f64).collect();
        c.push_tensor("labels", Tensor::vector(labels)?);
        write_container(path, &c)
    }

    pub fn load(path: &Path) -> Result<LabeledDataset> {
        let display = path.display().to_string();
        let c = read_container(path)?;
        if c.meta("kind") != Some("dataset") {
            return Err(Error::format(&display, "not a dataset container"));
        }
        let role = Role::from_str(
            c.meta("role")
                .ok_or_else(|| Error::format(&display, "missing role metadata"))?,
        )?;
        let classes: Vec<String> = c
            .meta("classes")
            .ok_or_else(|| Error::format(&display, "missing classes metadata"))?
            .split(',')
            .map(str::to_string)
            .collect();
        let side: usize = c
            .meta("side")
            .unwrap_or("0")
            .parse()
            .map_err(|_| Error::format(&display, "bad side metadata"))?;
        let images = c.require(path, "images")?.clone();
        let labels_raw = c.require(path, "labels")?;
        let mut labels = Vec::with_capacity(labels_raw.len());
        for &v in labels_raw.data() {
            if v.fract() != 0.0 || v < 0.0 || v >= classes.len() as f64 {
                return Err(Error::format(&display, format!("bad label value {v}")));
            }
            labels.push(v as usize);
        }
        LabeledDataset::new(
            images,
            labels,
            classes,
            role,
            if side == 0 { None } else { Some(side) },
        )
        .map_err(|e| Error::format(&display, e.to_string()))
    }

    /// Loads and enforces the expected role, so stages cannot silently
    /// consume the wrong artifact.
    pub fn load_role(path: &Path, expected: Role) -> Result<LabeledDataset> {
        let ds = LabeledDataset::load(path)?;
        if ds.role != expected {
            return Err(Error::format(
                path.display().to_string(),
                format!(
                    "dataset role is '{}', expected '{}'",
                    ds.role.as_str(),
                    expected.as_str()
                ),
            ));
        }
        Ok(ds)
    }
}

/// Generates a dataset; the role is derived from the catalog the classes
/// come from (`True` → true-train, `Proxy` → proxy).
pub fn generate(spec: &DatasetSpec) -> Result<LabeledDataset> {
    match spec {
        DatasetSpec::Shapes(s) => generate_shapes(s),
        DatasetSpec::Mixture(m) => generate_mixture(m),
    }
}

fn generate_shapes(spec: &ShapesSpec) -> Result<LabeledDataset> {
    if spec.classes.is_empty() {
        return Err(Error::invalid("shape spec lists no classes"));
    }
    if spec.side < 6 {
        return Err(Error::invalid(format!(
            "image side must be at least 6, got {}",
            spec.side
        )));
    }
    if spec.samples_per_class == 0 {
        return Err(Error::invalid("samples_per_class must be positive"));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(Error::invalid("noise_std must be non-negative"));
    }
    let catalog = spec.classes[0].catalog();
    if spec.classes.iter().any(|c| c.catalog() != catalog) {
        return Err(Error::invalid(
            "true-catalog and proxy-catalog classes are disjoint and cannot be mixed in one dataset",
        ));
    }
    let mut seen = std::collections::HashSet::new();
    for c in &spec.classes {
        if !seen.insert(c.name()) {
            return Err(Error::invalid(format!("class '{}' listed twice", c.name())));
        }
    }

    let side = spec.side;
    let d = side * side;
    let n = spec.classes.len() * spec.samples_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = if spec.noise_std > 0.0 {
        Some(Normal::new(0.0, spec.noise_std).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let mut images = Tensor::zeros(vec![n, d]);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (label, &class) in spec.classes.iter().enumerate() {
        let template = shape_template(class, side);
        for _ in 0..spec.samples_per_class {
            let (dx, dy) = if spec.jitter > 0 {
                let j = spec.jitter as i64;
                (rng.random_range(-j..=j), rng.random_range(-j..=j))
            } else {
                (0, 0)
            };
            let out = images.row_mut(row);
            for i in 0..side as i64 {
                for jx in 0..side as i64 {
                    let (si, sj) = (i - dy, jx - dx);
                    if (0..side as i64).contains(&si) && (0..side as i64).contains(&sj) {
                        out[(i * side as i64 + jx) as usize] =
                            template[(si * side as i64 + sj) as usize];
                    }
                }
            }
            if let Some(dist) = &noise {
                for p in out.iter_mut() {
                    *p = (*p + dist.sample(&mut rng)).clamp(0.0, 1.0);
                }
            }
            labels.push(label);
            row += 1;
        }
    }
    let names = spec.classes.iter().map(|c| c.name().to_string()).collect();
    let role = match catalog {
        Catalog::True => Role::TrueTrain,
        Catalog::Proxy => Role::Proxy,
    };
    LabeledDataset::new(images, labels, names, role, Some(side))
}

/// Shell radii for the two mixture catalogs; distinct values keep every
/// true center strictly away from every proxy center.
const TRUE_SHELL_RADIUS: f64 = 0.15;
const PROXY_SHELL_RADIUS: f64 = 0.35;

fn generate_mixture(spec: &MixtureSpec) -> Result<LabeledDataset> {
    if spec.class_count == 0 {
        return Err(Error::invalid("mixture needs at least one class"));
    }
    if spec.dimension < 2 {
        return Err(Error::invalid("mixture dimension must be at least 2"));
    }
    if spec.samples_per_class == 0 {
        return Err(Error::invalid("samples_per_class must be positive"));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(Error::invalid("noise_std must be non-negative"));
    }
    let radius = match spec.catalog {
        Catalog::True => TRUE_SHELL_RADIUS,
        Catalog::Proxy => PROXY_SHELL_RADIUS,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut centers = Vec::with_capacity(spec.class_count);
    for _ in 0..spec.class_count {
        loop {
            let dir: Vec<f64> = (0..spec.dimension).map(|_| unit.sample(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-9 {
                let center: Vec<f64> = dir.iter().map(|v| 0.5 + radius * v / norm).collect();
                centers.push(center);
                break;
            }
        }
    }
    let n = spec.class_count * spec.samples_per_class;
    let mut images = Tensor::zeros(vec![n, spec.dimension]);
    let mut labels = Vec::with_capacity(n);
    let noise = if spec.noise_std > 0.0 {
        Some(Normal::new(0.0, spec.noise_std).unwrap())
    } else {
        None
    };
    let mut row = 0;
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let out = images.row_mut(row);
            for (o, &c) in out.iter_mut().zip(center) {
                let v = match &noise {
                    Some(dist) => c + dist.sample(&mut rng),
                    None => c,
                };
                *o = v.clamp(0.0, 1.0);
            }
            labels.push(label);
            row += 1;
        }
    }
    let prefix = match spec.catalog {
        Catalog::True => "blob-true",
        Catalog::Proxy => "blob-proxy",
    };
    let names = (0..spec.class_count)
        .map(|i| format!("{prefix}-{i}"))
        .collect();
    let role = match spec.catalog {
        Catalog::True => Role::TrueTrain,
        Catalog::Proxy => Role::Proxy,
    };
    LabeledDataset::new(images, labels, names, role, None)
}

/// Writes one grayscale image row as an ASCII PGM file (`P2`, maxval 255).
pub fn export_pgm(path: &Path, pixels: &[f64], side: usize) -> Result<()> {
    if pixels.len() != side * side {
        return Err(Error::shape(format!(
            "{} pixels do not form a {side}x{side} image",
            pixels.len()
        )));
    }
    let mut text = format!("P2\n{side} {side}\n255\n");
    for row in pixels.chunks(side) {
        let line: Vec<String> = row
            .iter()
            .map(|&p| ((p.clamp(0.0, 1.0) * 255.0).round() as u32).to_string())
            .collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec() -> ShapesSpec {
        ShapesSpec {
            classes: TRUE_SHAPES.to_vec(),
            samples_per_class: 5,
            side: 10,
            noise_std: 0.15,
            jitter: 1,
            seed: 42,
        }
    }

    #[test]
    fn generate_shapes_basics() {
        let ds = generate_shapes(&base_spec()).unwrap();
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.dim(), 100);
        assert_eq!(ds.role(), Role::TrueTrain);
        assert_eq!(ds.n_classes(), 4);
        for class in 0..4 {
            assert_eq!(ds.labels().iter().filter(|&&l| l == class).count(), 5);
        }
        assert!(ds.images().data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let a = generate_shapes(&base_spec()).unwrap();
        let b = generate_shapes(&base_spec()).unwrap();
        assert_eq!(a.images().data(), b.images().data());
        let mut other = base_spec();
        other.seed = 43;
        let c = generate_shapes(&other).unwrap();
        assert_ne!(a.images().data(), c.images().data());
    }

    #[test]
    fn zero_noise_zero_jitter_yields_exact_templates() {
        let spec = ShapesSpec {
            noise_std: 0.0,
            jitter: 0,
            samples_per_class: 2,
            ..base_spec()
        };
        let ds = generate_shapes(&spec).unwrap();
        for (i, &class) in TRUE_SHAPES.iter().enumerate() {
            let template = shape_template(class, 10);
            assert_eq!(ds.image(i * 2), &template[..], "{}", class.name());
        }
    }

    #[test]
    fn templates_are_pairwise_distinct() {
        let all: Vec<Vec<f64>> = TRUE_SHAPES
            .iter()
            .chain(PROXY_SHAPES.iter())
            .map(|&c| shape_template(c, 10))
            .collect();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j], "templates {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn mixing_catalogs_is_rejected() {
        let spec = ShapesSpec {
            classes: vec![ShapeClass::Cross, ShapeClass::Triangle],
            ..base_spec()
        };
        let err = generate_shapes(&spec).unwrap_err();
        assert!(err.to_string().contains("disjoint"), "{err}");
    }

    #[test]
    fn proxy_catalog_gets_proxy_role_and_disjoint_names() {
        let spec = ShapesSpec {
            classes: PROXY_SHAPES.to_vec(),
            ..base_spec()
        };
        let proxy = generate_shapes(&spec).unwrap();
        assert_eq!(proxy.role(), Role::Proxy);
        let true_ds = generate_shapes(&base_spec()).unwrap();
        for name in proxy.class_names() {
            assert!(!true_ds.class_names().contains(name));
        }
    }

    #[test]
    fn split_is_stratified_and_partitions_rows() {
        let spec = ShapesSpec {
            samples_per_class: 10,
            ..base_spec()
        };
        let ds = generate_shapes(&spec).unwrap();
        let (train, test) = ds.split(0.5, 7).unwrap();
        assert_eq!(train.role(), Role::TrueTrain);
        assert_eq!(test.role(), Role::TrueTest);
        for class in 0..4 {
            assert_eq!(train.labels().iter().filter(|&&l| l == class).count(), 5);
            assert_eq!(test.labels().iter().filter(|&&l| l == class).count(), 5);
        }
        // Union of the two sides is exactly the original multiset of rows.
        let key = |ds: &LabeledDataset, i: usize| {
            let bits: Vec<u64> = ds.image(i).iter().map(|v| v.to_bits()).collect();
            (bits, ds.labels()[i])
        };
        let mut original: Vec<_> = (0..ds.len()).map(|i| key(&ds, i)).collect();
        let mut recombined: Vec<_> = (0..train.len())
            .map(|i| key(&train, i))
            .chain((0..test.len()).map(|i| key(&test, i)))
            .collect();
        original.sort();
        recombined.sort();
        assert_eq!(original, recombined);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let ds = generate_shapes(&base_spec()).unwrap();
        assert!(ds.split(0.0, 1).is_err());
        assert!(ds.split(1.0, 1).is_err());
        assert!(ds.split(-0.2, 1).is_err());
    }

    #[test]
    fn save_load_round_trip_preserves_bits_and_role() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.bbr");
        let ds = generate_shapes(&base_spec()).unwrap();
        ds.save(&path, &[("config".to_string(), "abc123".to_string())])
            .unwrap();
        let back = LabeledDataset::load(&path).unwrap();
        assert_eq!(back.role(), ds.role());
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.class_names(), ds.class_names());
        assert_eq!(back.side(), Some(10));
        for (a, b) in back.images().data().iter().zip(ds.images().data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let err = LabeledDataset::load_role(&path, Role::Proxy).unwrap_err();
        assert!(err.to_string().contains("role"), "{err}");
    }

    #[test]
    fn mixture_centers_sit_on_their_shells() {
        let spec = MixtureSpec {
            catalog: Catalog::True,
            class_count: 3,
            samples_per_class: 4,
            dimension: 6,
            noise_std: 0.0,
            seed: 5,
        };
        let ds = generate_mixture(&spec).unwrap();
        assert_eq!(ds.role(), Role::TrueTrain);
        // noise 0 → every sample equals its class center on the 0.15 shell.
        for i in 0..ds.len() {
            let r: f64 = ds
                .image(i)
                .iter()
                .map(|&v| (v - 0.5) * (v - 0.5))
                .sum::<f64>()
                .sqrt();
            assert!((r - TRUE_SHELL_RADIUS).abs() < 1e-9, "radius {r}");
        }
        let proxy = generate_mixture(&MixtureSpec {
            catalog: Catalog::Proxy,
            ..spec
        })
        .unwrap();
        assert_eq!(proxy.role(), Role::Proxy);
        for i in 0..proxy.len() {
            let r: f64 = proxy
                .image(i)
                .iter()
                .map(|&v| (v - 0.5) * (v - 0.5))
                .sum::<f64>()
                .sqrt();
            assert!((r - PROXY_SHELL_RADIUS).abs() < 1e-9);
        }
    }

    #[test]
    fn pgm_export_writes_valid_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = shape_template(ShapeClass::Cross, 10);
        export_pgm(&path, &img, 10).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("P2\n10 10\n255\n"));
        let values: Vec<&str> = text.lines().skip(3).flat_map(|l| l.split(' ')).collect();
        assert_eq!(values.len(), 100);
        assert!(values.iter().all(|v| *v == "0" || *v == "255"));
    }
}
