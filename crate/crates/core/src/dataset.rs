//! Pre-training dataset assembly: mixes classes from several source image
//! databases into one class-per-directory dataset with a JSON Lines manifest.

use std::collections::{BTreeMap, HashMap};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::fractal2d;
use crate::imageio::image_rel_path;
use crate::renderer::{self, RenderRecord};
use crate::rng::RngStream;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SPEC_FILE: &str = "spec.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceDb {
    FractalDB,
    ProcSynthDB,
    MorphSynthDB,
    FlatWorldDB,
}

impl SourceDb {
    pub fn name(self) -> &'static str {
        match self {
            SourceDb::FractalDB => "FractalDB",
            SourceDb::ProcSynthDB => "ProcSynthDB",
            SourceDb::MorphSynthDB => "MorphSynthDB",
            SourceDb::FlatWorldDB => "FlatWorldDB",
        }
    }

    fn is_rendered(self) -> bool {
        self != SourceDb::FractalDB
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub source: SourceDb,
    pub classes: usize,
    /// Root of the generated source image database.
    pub path: PathBuf,
}

fn default_images() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub components: Vec<Component>,
    #[serde(default = "default_images")]
    pub images_per_class: usize,
    #[serde(default)]
    pub seed: u64,
    /// Keeps drawing classes round-robin until this many exist (e.g. 999 -> 1000).
    #[serde(default)]
    pub pad_to: Option<usize>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::invalid("dataset needs at least one component"));
        }
        if let Some(c) = self.components.iter().find(|c| c.classes < 1) {
            return Err(Error::invalid(format!("{} class count must be at least 1", c.source.name())));
        }
        if self.images_per_class < 1 {
            return Err(Error::invalid("images per class must be at least 1"));
        }
        if let Some(p) = self.pad_to {
            if p < self.requested_classes() {
                return Err(Error::invalid(format!(
                    "pad_to {p} is below the {} requested classes",
                    self.requested_classes()
                )));
            }
        }
        Ok(())
    }

    pub fn requested_classes(&self) -> usize {
        self.components.iter().map(|c| c.classes).sum()
    }

    pub fn total_classes(&self) -> usize {
        self.pad_to.unwrap_or_else(|| self.requested_classes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLink {
    pub stage: String,
    pub seed: u64,
    pub class_index: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub image_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub global_class: usize,
    pub image_index: usize,
    pub source: SourceDb,
    /// Index of the component in the spec that supplied this class.
    pub component: usize,
    pub source_class: usize,
    /// Relative to the dataset root.
    pub path: String,
    pub source_path: PathBuf,
    /// Mesh file or IFS record the image was produced from.
    pub reference: String,
    pub seed_chain: Vec<SeedLink>,
}

/// Global class order: round-robin across components, skipping exhausted
/// ones. Returns `(component, source class)` per global class.
pub fn interleave(quotas: &[usize]) -> Vec<(usize, usize)> {
    let mut taken = vec![0; quotas.len()];
    let mut out = Vec::with_capacity(quotas.iter().sum());
    while out.len() < quotas.iter().sum::<usize>() {
        for (c, &q) in quotas.iter().enumerate() {
            if taken[c] < q {
                out.push((c, taken[c]));
                taken[c] += 1;
            }
        }
    }
    out
}

/// Per-component class quotas after padding: extra classes are drawn one
/// component at a time in spec order.
pub fn quotas(spec: &DatasetSpec) -> Vec<usize> {
    let mut q: Vec<usize> = spec.components.iter().map(|c| c.classes).collect();
    let mut extra = spec.total_classes() - spec.requested_classes();
    let mut c = 0;
    while extra > 0 {
        q[c] += 1;
        extra -= 1;
        c = (c + 1) % q.len();
    }
    q
}

fn count_class_dirs(root: &Path) -> Result<usize> {
    let mut n = 0;
    for entry in std::fs::read_dir(root).at(root)? {
        let name = entry.at(root)?.file_name();
        let name = name.to_string_lossy();
        if name.strip_prefix("class_").is_some_and(|s| s.parse::<usize>().is_ok()) {
            n += 1;
        }
    }
    Ok(n)
}

fn format_err(path: &Path, msg: impl ToString) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

/// Provenance available for a source database.
enum SourceLog {
    Fractal(HashMap<usize, fractal2d::FractalRecord>),
    Render(HashMap<(usize, usize), RenderRecord>),
}

fn load_source_log(source: SourceDb, root: &Path) -> Result<SourceLog> {
    if source.is_rendered() {
        let recs = renderer::read_renderlog(&root.join("renderlog.jsonl"))?;
        Ok(SourceLog::Render(
            recs.into_iter().map(|r| ((r.job.class_index, r.job.image_index), r)).collect(),
        ))
    } else {
        let recs = fractal2d::read_genlog(&root.join("genlog.jsonl"))?;
        Ok(SourceLog::Fractal(recs.into_iter().map(|r| (r.class_index, r)).collect()))
    }
}

fn provenance(
    log: &SourceLog,
    source: SourceDb,
    root: &Path,
    class: usize,
    image: usize,
) -> Result<(String, Vec<SeedLink>)> {
    match log {
        SourceLog::Fractal(recs) => {
            let r = recs
                .get(&class)
                .ok_or_else(|| format_err(&root.join("genlog.jsonl"), format!("no record for class {class}")))?;
            Ok((
                format!("{}#class_{class:04}", root.join("genlog.jsonl").display()),
                vec![SeedLink {
                    stage: "fractal".into(),
                    seed: r.seed,
                    class_index: class,
                    image_index: Some(image),
                }],
            ))
        }
        SourceLog::Render(recs) => {
            let r = recs.get(&(class, image)).ok_or_else(|| {
                format_err(
                    &root.join("renderlog.jsonl"),
                    format!("no {} record for class {class} image {image}", source.name()),
                )
            })?;
            let mut chain = Vec::new();
            if let Some(s) = r.mesh_seed {
                chain.push(SeedLink {
                    stage: "mesh".into(),
                    seed: s,
                    class_index: class,
                    image_index: None,
                });
            }
            chain.push(SeedLink {
                stage: "render".into(),
                seed: r.seed,
                class_index: class,
                image_index: Some(image),
            });
            Ok((r.job.mesh.clone(), chain))
        }
    }
}

fn link_or_copy(src: &Path, dst: &Path) -> Result<()> {
    if dst.exists() {
        std::fs::remove_file(dst).at(dst)?;
    }
    if std::fs::hard_link(src, dst).is_err() {
        std::fs::copy(src, dst).at(dst)?;
    }
    Ok(())
}

/// Selects the first classes of every component, interleaves them into
/// dense global class ids, links the images under `out` and writes
/// `manifest.jsonl` and `spec.json`.
pub fn build_combination(spec: &DatasetSpec, out: &Path) -> Result<Vec<ManifestEntry>> {
    spec.validate()?;
    let quotas = quotas(spec);
    let mut logs = Vec::new();
    for (c, comp) in spec.components.iter().enumerate() {
        let available = count_class_dirs(&comp.path)?;
        if available < quotas[c] {
            return Err(Error::Capacity {
                source_db: comp.source.name().into(),
                what: "classes",
                requested: quotas[c],
                available,
            });
        }
        logs.push(load_source_log(comp.source, &comp.path)?);
    }
    let order = interleave(&quotas);
    std::fs::create_dir_all(out).at(out)?;

    let per_class: Vec<Vec<ManifestEntry>> = order
        .par_iter()
        .enumerate()
        .map(|(g, &(c, class))| {
            let comp = &spec.components[c];
            let dir = out.join(format!("class_{g:04}"));
            std::fs::create_dir_all(&dir).at(&dir)?;
            (0..spec.images_per_class)
                .map(|k| {
                    let src = comp.path.join(image_rel_path(class, k));
                    if !src.is_file() {
                        return Err(Error::Capacity {
                            source_db: comp.source.name().into(),
                            what: "images per class",
                            requested: spec.images_per_class,
                            available: k,
                        });
                    }
                    let rel = image_rel_path(g, k);
                    link_or_copy(&src, &out.join(&rel))?;
                    let (reference, seed_chain) = provenance(&logs[c], comp.source, &comp.path, class, k)?;
                    Ok(ManifestEntry {
                        global_class: g,
                        image_index: k,
                        source: comp.source,
                        component: c,
                        source_class: class,
                        path: rel.to_string_lossy().replace('\\', "/"),
                        source_path: src,
                        reference,
                        seed_chain,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let entries: Vec<ManifestEntry> = per_class.into_iter().flatten().collect();
    write_manifest(&out.join(MANIFEST_FILE), &entries)?;
    let spec_path = out.join(SPEC_FILE);
    std::fs::write(&spec_path, serde_json::to_vec_pretty(spec)?).at(&spec_path)?;
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut buf = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut buf, e)?;
        buf.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .at(path)
}

pub fn read_manifest(root: &Path) -> Result<Vec<ManifestEntry>> {
    let path = root.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| format_err(&path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format_err(&path, format!("line {}: {e}", i + 1))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    Empty,
    MissingFile { path: String },
    Unreadable { path: String, msg: String },
    DimensionMismatch { path: String, expected: [u32; 2], found: [u32; 2] },
    /// Global class ids `first..=last` are absent.
    ClassIdGap { first: usize, last: usize },
    NonUniformCount { class: usize, count: usize, expected: usize },
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Finding::Empty => write!(f, "manifest has no entries"),
            Finding::MissingFile { path } => write!(f, "missing file {path}"),
            Finding::Unreadable { path, msg } => write!(f, "unreadable image {path}: {msg}"),
            Finding::DimensionMismatch { path, expected, found } => write!(
                f,
                "{path} is {}x{}, expected {}x{}",
                found[0], found[1], expected[0], expected[1]
            ),
            Finding::ClassIdGap { first, last } if first == last => write!(f, "class id {first} is missing"),
            Finding::ClassIdGap { first, last } => write!(f, "class ids {first}..={last} are missing"),
            Finding::NonUniformCount { class, count, expected } => {
                write!(f, "class {class} has {count} images, expected {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub entries: usize,
    pub classes: usize,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

fn read_spec(root: &Path) -> Option<DatasetSpec> {
    let text = std::fs::read_to_string(root.join(SPEC_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Checks file existence, image dimensions, class id density and per-class
/// image counts. Only an unreadable manifest is an error.
pub fn validate_manifest(root: &Path) -> Result<ValidationReport> {
    let entries = read_manifest(root)?;
    let mut findings = Vec::new();
    if entries.is_empty() {
        findings.push(Finding::Empty);
        return Ok(ValidationReport { entries: 0, classes: 0, findings });
    }

    let dims: Vec<std::result::Result<[u32; 2], Finding>> = entries
        .par_iter()
        .map(|e| {
            let p = root.join(&e.path);
            if !p.is_file() {
                return Err(Finding::MissingFile { path: e.path.clone() });
            }
            image::image_dimensions(&p)
                .map(|(w, h)| [w, h])
                .map_err(|err| Finding::Unreadable { path: e.path.clone(), msg: err.to_string() })
        })
        .collect();
    let expected = dims.iter().find_map(|d| d.as_ref().ok().copied());
    for (e, d) in entries.iter().zip(dims) {
        match d {
            Err(f) => findings.push(f),
            Ok(found) if Some(found) != expected => findings.push(Finding::DimensionMismatch {
                path: e.path.clone(),
                expected: expected.unwrap_or(found),
                found,
            }),
            Ok(_) => {}
        }
    }

    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for e in &entries {
        *counts.entry(e.global_class).or_default() += 1;
    }
    let mut next = 0;
    for &c in counts.keys() {
        if c > next {
            findings.push(Finding::ClassIdGap { first: next, last: c - 1 });
        }
        next = c + 1;
    }
    let expected_count = read_spec(root).map(|s| s.images_per_class).unwrap_or_else(|| {
        // Most common count, ties to the larger.
        let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
        for &n in counts.values() {
            *freq.entry(n).or_default() += 1;
        }
        freq.iter().max_by_key(|&(&n, &f)| (f, n)).map(|(&n, _)| n).unwrap_or(0)
    });
    for (&class, &count) in &counts {
        if count != expected_count {
            findings.push(Finding::NonUniformCount { class, count, expected: expected_count });
        }
    }
    Ok(ValidationReport {
        entries: entries.len(),
        classes: counts.len(),
        findings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    pub source: SourceDb,
    pub classes: usize,
    pub images: usize,
    /// Mean fraction of non-background pixels (the fill rate for fractals).
    pub mean_foreground: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub classes: usize,
    pub images: usize,
    /// `Some` when every class has the same number of images.
    pub images_per_class: Option<usize>,
    pub bytes: u64,
    pub per_source: Vec<SourceStats>,
}

fn foreground_fraction(path: &Path) -> Result<f64> {
    let img = image::open(path)?.into_rgb8();
    let n = img.pixels().filter(|p| p.0 != [0, 0, 0]).count();
    Ok(n as f64 / (img.width() * img.height()) as f64)
}

pub fn dataset_stats(root: &Path) -> Result<DatasetStats> {
    let entries = read_manifest(root)?;
    if entries.is_empty() {
        return Err(Error::EmptyInput("dataset manifest has no entries"));
    }
    let measured: Vec<(u64, f64)> = entries
        .par_iter()
        .map(|e| {
            let p = root.join(&e.path);
            let bytes = std::fs::metadata(&p).at(&p)?.len();
            Ok((bytes, foreground_fraction(&p)?))
        })
        .collect::<Result<_>>()?;

    let mut per_class: BTreeMap<usize, usize> = BTreeMap::new();
    let mut per_source: BTreeMap<SourceDb, (std::collections::BTreeSet<usize>, usize, f64)> = BTreeMap::new();
    for (e, &(_, fg)) in entries.iter().zip(&measured) {
        *per_class.entry(e.global_class).or_default() += 1;
        let s = per_source.entry(e.source).or_default();
        s.0.insert(e.global_class);
        s.1 += 1;
        s.2 += fg;
    }
    let first = *per_class.values().next().unwrap_or(&0);
    Ok(DatasetStats {
        classes: per_class.len(),
        images: entries.len(),
        images_per_class: per_class.values().all(|&n| n == first).then_some(first),
        bytes: measured.iter().map(|m| m.0).sum(),
        per_source: per_source
            .into_iter()
            .map(|(source, (classes, images, fg))| SourceStats {
                source,
                classes: classes.len(),
                images,
                mean_foreground: fg / images as f64,
            })
            .collect(),
    })
}

/// Regenerates the PNG bytes of one entry from its source database logs.
pub fn replay_entry(spec: &DatasetSpec, entry: &ManifestEntry) -> Result<Vec<u8>> {
    let comp = spec
        .components
        .get(entry.component)
        .ok_or_else(|| Error::ContractViolation(format!("entry names component {}", entry.component)))?;
    match load_source_log(comp.source, &comp.path)? {
        SourceLog::Fractal(recs) => {
            let rec = recs
                .get(&entry.source_class)
                .ok_or_else(|| Error::ContractViolation(format!("no IFS record for class {}", entry.source_class)))?;
            let cfg = fractal2d::read_config(&comp.path)?;
            fractal2d::replay_image(rec, entry.image_index, &cfg)?.to_png()
        }
        SourceLog::Render(recs) => {
            let rec = recs.get(&(entry.source_class, entry.image_index)).ok_or_else(|| {
                Error::ContractViolation(format!(
                    "no render record for class {} image {}",
                    entry.source_class, entry.image_index
                ))
            })?;
            let mesh = crate::geometry::obj::read_obj(Path::new(&rec.job.mesh))?;
            renderer::rasterize(&mesh, &rec.job)?.to_png()
        }
    }
}

/// Replays a seeded random `fraction` of the entries (at least one) and
/// returns the paths whose regenerated bytes differ from the stored image.
pub fn spot_check(root: &Path, fraction: f64, seed: u64) -> Result<(usize, Vec<String>)> {
    let spec_path = root.join(SPEC_FILE);
    let spec: DatasetSpec = serde_json::from_str(&std::fs::read_to_string(&spec_path).at(&spec_path)?)
        .map_err(|e| format_err(&spec_path, e))?;
    let entries = read_manifest(root)?;
    if entries.is_empty() {
        return Err(Error::EmptyInput("dataset manifest has no entries"));
    }
    let n = ((entries.len() as f64 * fraction).ceil() as usize).clamp(1, entries.len());
    let mut rng = RngStream::new(seed, 0).rng();
    let picked = sample(&mut rng, entries.len(), n).into_vec();
    let mismatched: Vec<Option<String>> = picked
        .par_iter()
        .map(|&i| {
            let e = &entries[i];
            let stored = std::fs::read(root.join(&e.path)).at(root.join(&e.path))?;
            Ok((replay_entry(&spec, e)? != stored).then(|| e.path.clone()))
        })
        .collect::<Result<_>>()?;
    Ok((n, mismatched.into_iter().flatten().collect()))
}

pub const PREVIEW_IMAGES_PER_CLASS: usize = 4;

/// Contact sheet: one row per class (the first `classes` global classes),
/// one column per image (the first four). RGB, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Preview {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub classes: usize,
}

impl Preview {
    pub fn to_png(&self) -> Result<Vec<u8>> {
        crate::imageio::encode_png(self.width, self.height, 3, &self.pixels)
    }
}

/// Builds the preview sheet. Asking for more classes than exist shows all of
/// them; check `Preview::classes` to detect the clamp.
pub fn preview(root: &Path, classes: usize) -> Result<Preview> {
    if classes < 1 {
        return Err(Error::invalid("preview needs at least one class"));
    }
    let entries = read_manifest(root)?;
    let mut by_class: BTreeMap<usize, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in &entries {
        by_class.entry(e.global_class).or_default().push(e);
    }
    if by_class.is_empty() {
        return Err(Error::EmptyInput("dataset manifest has no entries"));
    }
    let rows: Vec<Vec<image::RgbImage>> = by_class
        .values()
        .take(classes)
        .map(|imgs| {
            let mut imgs = imgs.clone();
            imgs.sort_by_key(|e| e.image_index);
            imgs.iter()
                .take(PREVIEW_IMAGES_PER_CLASS)
                .map(|e| Ok(image::open(root.join(&e.path))?.into_rgb8()))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let cell_w = rows.iter().flatten().map(|i| i.width()).max().unwrap_or(1);
    let cell_h = rows.iter().flatten().map(|i| i.height()).max().unwrap_or(1);
    let mut sheet = image::RgbImage::new(cell_w * PREVIEW_IMAGES_PER_CLASS as u32, cell_h * rows.len() as u32);
    for (r, row) in rows.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            image::imageops::replace(&mut sheet, img, (c as u32 * cell_w).into(), (r as u32 * cell_h).into());
        }
    }
    Ok(Preview {
        width: sheet.width(),
        height: sheet.height(),
        classes: rows.len(),
        pixels: sheet.into_raw(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_robin_alternates() {
        let o = interleave(&[3, 3]);
        assert_eq!(o, vec![(0, 0), (1, 0), (0, 1), (1, 1), (0, 2), (1, 2)]);
        for (g, &(c, _)) in interleave(&[5, 5, 5]).iter().enumerate() {
            assert_eq!(c, g % 3);
        }
    }

    #[test]
    fn exhausted_sources_are_skipped() {
        assert_eq!(interleave(&[1, 3]), vec![(0, 0), (1, 0), (1, 1), (1, 2)]);
    }

    #[test]
    fn three_way_split_gives_999_unless_padded() {
        let comp = |s| Component { source: s, classes: 333, path: PathBuf::new() };
        let mut spec = DatasetSpec {
            components: vec![comp(SourceDb::FractalDB), comp(SourceDb::ProcSynthDB), comp(SourceDb::MorphSynthDB)],
            images_per_class: 1,
            seed: 0,
            pad_to: None,
        };
        assert_eq!(interleave(&quotas(&spec)).len(), 999);
        spec.pad_to = Some(1000);
        assert_eq!(quotas(&spec), vec![334, 333, 333]);
        spec.pad_to = Some(998);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn spec_json_defaults() {
        let s: DatasetSpec = serde_json::from_str(
            r#"{"components":[{"source":"FractalDB","classes":10,"path":"f"}]}"#,
        )
        .unwrap();
        assert_eq!(s.images_per_class, 1000);
        assert_eq!(s.total_classes(), 10);
    }
}
