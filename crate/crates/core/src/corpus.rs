//! Directory ingestion and corpus-level budget reports.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::{compare_budgets, write_csv, BaselineSpec, ComparisonRow};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::partition::ImageDims;

/// Identifier and size of one corpus image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub id: String,
    pub dims: ImageDims,
}

#[derive(Debug, Clone)]
pub struct CorpusImage {
    pub id: String,
    pub dims: ImageDims,
    pub pixels: RgbImage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    /// Sorted by file name.
    pub images: Vec<CorpusImage>,
    pub skipped: Vec<SkippedFile>,
}

impl Corpus {
    pub fn records(&self) -> Vec<ImageRecord> {
        self.images
            .iter()
            .map(|img| ImageRecord {
                id: img.id.clone(),
                dims: img.dims,
            })
            .collect()
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?)
}

enum Decoded {
    Image(CorpusImage),
    Skipped(SkippedFile),
}

fn decode_file(path: &Path) -> Result<Decoded> {
    let bytes = fs::read(path)?;
    let skip = |reason: String| {
        Ok(Decoded::Skipped(SkippedFile {
            path: path.to_path_buf(),
            reason,
        }))
    };
    let format = match image::guess_format(&bytes) {
        Ok(f @ (ImageFormat::Png | ImageFormat::Jpeg)) => f,
        Ok(other) => return skip(format!("unsupported format {other:?}")),
        Err(e) => return skip(e.to_string()),
    };
    let pixels = match image::load_from_memory_with_format(&bytes, format) {
        Ok(img) => img.to_rgb8(),
        Err(e) => return skip(e.to_string()),
    };
    let (width, height) = pixels.dimensions();
    let dims = match ImageDims::new(width, height) {
        Ok(d) => d,
        Err(e) => return skip(e.to_string()),
    };
    let id = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Decoded::Image(CorpusImage { id, dims, pixels }))
}

/// Decodes every PNG and JPEG file directly inside `dir`.
///
/// Files that are not PNG/JPEG or fail to decode are skipped with a warning.
/// Fails if the directory cannot be read or yields no images at all.
pub fn ingest(dir: &Path, workers: usize) -> Result<Corpus> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            paths.push(entry.path());
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let decoded = pool(workers)?.install(|| paths.par_iter().map(|p| decode_file(p)).collect::<Result<Vec<_>>>())?;

    let mut images = Vec::new();
    let mut skipped = Vec::new();
    for d in decoded {
        match d {
            Decoded::Image(img) => images.push(img),
            Decoded::Skipped(s) => {
                warn!("skipping {}: {}", s.path.display(), s.reason);
                skipped.push(s);
            }
        }
    }
    if images.is_empty() {
        return Err(Error::EmptyCorpus(dir.to_path_buf()));
    }
    Ok(Corpus { images, skipped })
}

/// Summary of one strategy across the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyAggregate {
    pub strategy: String,
    pub images: usize,
    pub mean_tokens: f64,
    pub max_tokens: usize,
    pub mean_distortion: f64,
    /// Keyed by `"{rows}x{cols}"`.
    pub grid_histogram: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub rows: Vec<ComparisonRow>,
    pub aggregates: Vec<StrategyAggregate>,
}

impl CorpusReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(&self.rows, out)
    }

    pub fn aggregates_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.aggregates).expect("aggregates serialize");
        s.push('\n');
        s
    }
}

/// Folds per-image rows into per-strategy aggregates, strategies in order of
/// first appearance. Sums run in row order so that the result depends only
/// on the rows themselves.
pub fn aggregate(rows: &[ComparisonRow]) -> Vec<StrategyAggregate> {
    let mut out: Vec<StrategyAggregate> = Vec::new();
    let mut token_sums: Vec<f64> = Vec::new();
    let mut distortion_sums: Vec<f64> = Vec::new();
    for row in rows {
        let i = match out.iter().position(|a| a.strategy == row.strategy) {
            Some(i) => i,
            None => {
                out.push(StrategyAggregate {
                    strategy: row.strategy.clone(),
                    images: 0,
                    mean_tokens: 0.0,
                    max_tokens: 0,
                    mean_distortion: 0.0,
                    grid_histogram: BTreeMap::new(),
                });
                token_sums.push(0.0);
                distortion_sums.push(0.0);
                out.len() - 1
            }
        };
        let agg = &mut out[i];
        agg.images += 1;
        agg.max_tokens = agg.max_tokens.max(row.tokens);
        *agg.grid_histogram.entry(format!("{}x{}", row.rows, row.cols)).or_default() += 1;
        token_sums[i] += row.tokens as f64;
        distortion_sums[i] += row.distortion;
    }
    for ((agg, tokens), distortion) in out.iter_mut().zip(token_sums).zip(distortion_sums) {
        agg.mean_tokens = tokens / agg.images as f64;
        agg.mean_distortion = distortion / agg.images as f64;
    }
    out
}

/// Compares every image against the baselines on `workers` threads. Output
/// is sorted by image id and identical for any worker count.
pub fn run_report(
    records: &[ImageRecord],
    baselines: &[BaselineSpec],
    config: &PipelineConfig,
    workers: usize,
) -> Result<CorpusReport> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyCorpus(PathBuf::new()));
    }
    let mut sorted: Vec<&ImageRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let per_image: Vec<Vec<ComparisonRow>> = pool(workers)?.install(|| {
        sorted
            .par_iter()
            .map(|r| compare_budgets(&r.id, r.dims, baselines, config))
            .collect()
    });
    let rows: Vec<ComparisonRow> = per_image.into_iter().flatten().collect();
    let aggregates = aggregate(&rows);
    Ok(CorpusReport { rows, aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::ADAPTIVE;

    fn rec(id: &str, w: u32, h: u32) -> ImageRecord {
        ImageRecord {
            id: id.into(),
            dims: ImageDims::new(w, h).unwrap(),
        }
    }

    #[test]
    fn single_square_image() {
        let report = run_report(&[rec("a", 336, 336)], &[BaselineSpec::llava()], &PipelineConfig::default(), 1).unwrap();
        let adaptive = &report.aggregates[0];
        assert_eq!(adaptive.strategy, ADAPTIVE);
        assert_eq!(adaptive.mean_tokens, 722.0);
        assert_eq!(report.aggregates[1].mean_tokens, 576.0);
    }

    #[test]
    fn full_grid_histogram() {
        let report = run_report(&[rec("a", 1008, 1008)], &[], &PipelineConfig::default(), 2).unwrap();
        let hist = &report.aggregates[0].grid_histogram;
        assert_eq!(hist.len(), 1);
        assert_eq!(hist["3x3"], 1);
    }

    #[test]
    fn square_images_get_square_grids() {
        let records: Vec<_> = (1..60).map(|i| rec(&format!("{i:03}"), i * 23, i * 23)).collect();
        let report = run_report(&records, &[BaselineSpec::monkey()], &PipelineConfig::default(), 3).unwrap();
        for row in report.rows.iter().filter(|r| r.strategy == ADAPTIVE) {
            assert_eq!(row.rows, row.cols, "{row:?}");
        }
        let total: usize = report.aggregates[0].grid_histogram.values().sum();
        assert_eq!(total, records.len());
    }

    #[test]
    fn rows_sorted_by_id() {
        let report = run_report(&[rec("b", 10, 10), rec("a", 900, 10)], &[], &PipelineConfig::default(), 1).unwrap();
        let ids: Vec<_> = report.rows.iter().map(|r| r.image.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn empty_records_rejected() {
        assert!(matches!(
            run_report(&[], &[], &PipelineConfig::default(), 1),
            Err(Error::EmptyCorpus(_))
        ));
    }
}
