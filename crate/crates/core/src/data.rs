//! Dataset ingestion and synthetic generation.
//!
//! Files carry `(user_id, item, count)` triples, either as CSV with a
//! `user_id,item,count` header or as JSON Lines with the same keys. Two
//! synthetic generators cover the experiment protocols: Poisson counts with
//! Dirichlet-distributed rates (single-item count datasets) and heavy-tailed
//! sparse histograms (multi-item datasets with very unequal user sizes).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, LogNormal, Poisson, Zeta};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, UserHistogram};
use crate::noise::RandomSource;

/// Per-user sample-size cap for the heavy-tailed generator: unbounded power
/// laws occasionally produce astronomically large sizes that would stall a
/// desk-scale run without changing any tested property.
const MAX_USER_SIZE: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FileFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Record {
    user_id: String,
    item: String,
    count: u64,
}

fn parse_error(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn read_records(path: &Path, format: FileFormat) -> Result<Vec<Record>> {
    let file = std::fs::File::open(path)?;
    match format {
        FileFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
            {
                let headers = reader.headers()?;
                let expected = ["user_id", "item", "count"];
                if headers.iter().collect::<Vec<_>>() != expected {
                    return Err(parse_error(
                        1,
                        format!("expected header user_id,item,count, got {headers:?}"),
                    ));
                }
            }
            let mut records = Vec::new();
            for row in reader.into_deserialize::<Record>() {
                let record: Record = row.map_err(|e| {
                    let line = e
                        .position()
                        .map(|p| p.line() as usize)
                        .unwrap_or(0);
                    parse_error(line, e.to_string())
                })?;
                if record.count == 0 {
                    // The csv reader has already advanced; recover the line
                    // from the record index (header is line 1).
                    return Err(parse_error(records.len() + 2, "count must be at least 1"));
                }
                records.push(record);
            }
            Ok(records)
        }
        FileFormat::Jsonl => {
            let reader = BufReader::new(file);
            let mut records = Vec::new();
            for (idx, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: Record = serde_json::from_str(&line)
                    .map_err(|e| parse_error(idx + 1, e.to_string()))?;
                if record.count == 0 {
                    return Err(parse_error(idx + 1, "count must be at least 1"));
                }
                records.push(record);
            }
            Ok(records)
        }
    }
}

/// Loads `(user_id, item, count)` triples into a [`Dataset`].
///
/// Counts must be at least 1; duplicate `(user, item)` pairs are summed.
/// Items are assigned indices by aggregate count descending, ties broken by
/// item name, and users are ordered by user id — both deterministic. With
/// `top_d`, only the `d` items with the largest aggregates are kept (other
/// items are dropped, which may leave some users with empty histograms).
///
/// Reloading a written dataset reproduces it exactly whenever its aggregate
/// counts are nonincreasing in the item index (true for anything produced by
/// top-`d` restriction); otherwise the items come back consistently
/// relabeled, which leaves every norm, aggregate, and loss unchanged.
pub fn load_dataset(path: &Path, format: FileFormat, top_d: Option<usize>) -> Result<Dataset> {
    let records = read_records(path, format)?;
    if records.is_empty() {
        return Err(Error::InvalidDataset(format!("{} contains no records", path.display())));
    }
    // Aggregate per item, then fix the item order: count descending, name
    // ascending.
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    for r in &records {
        *totals.entry(&r.item).or_insert(0) += r.count;
    }
    let mut item_order: Vec<(&str, u64)> = totals.into_iter().collect();
    item_order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    if let Some(d) = top_d {
        if d == 0 {
            return Err(Error::invalid("top_d", "must be at least 1"));
        }
        if d > item_order.len() {
            return Err(Error::invalid(
                "top_d",
                format!("{d} exceeds the {} distinct items present", item_order.len()),
            ));
        }
        item_order.truncate(d);
    }
    let index: BTreeMap<&str, usize> =
        item_order.iter().enumerate().map(|(i, (name, _))| (*name, i)).collect();
    let domain = item_order.len();

    let mut per_user: BTreeMap<&str, Vec<(usize, u64)>> = BTreeMap::new();
    for r in &records {
        let entries = per_user.entry(&r.user_id).or_default();
        if let Some(&i) = index.get(r.item.as_str()) {
            entries.push((i, r.count));
        }
    }
    let users = per_user
        .into_values()
        .map(|entries| UserHistogram::new(domain, entries))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(users)
}

/// Writes a dataset as `(user_id, item, count)` triples. User and item ids
/// are zero-padded indices (`u000000`, `i000000`, …) so that lexicographic
/// order equals index order on reload.
pub fn write_dataset(dataset: &Dataset, path: &Path, format: FileFormat) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let rows = dataset.users().iter().enumerate().flat_map(|(u, hist)| {
        hist.entries().map(move |(item, count)| Record {
            user_id: format!("u{u:06}"),
            item: format!("i{item:06}"),
            count,
        })
    });
    match format {
        FileFormat::Csv => {
            let mut writer = csv::Writer::from_writer(file);
            for row in rows {
                writer.serialize(row)?;
            }
            writer.flush()?;
        }
        FileFormat::Jsonl => {
            let mut writer = BufWriter::new(file);
            for row in rows {
                serde_json::to_writer(&mut writer, &row)?;
                writeln!(writer)?;
            }
            writer.flush()?;
        }
    }
    Ok(())
}

/// Single-item count dataset with Dirichlet-distributed Poisson rates.
///
/// Draws `p ~ Dirichlet(alpha * 1_n)` (via normalized Gamma variates), sets
/// `rate_i = total_mass * p_i` — so the rates sum to `total_mass`, which
/// defaults to `n`, making the mean rate exactly 1 — and samples one count
/// `N_i ~ Poisson(rate_i)` per user. Larger `alpha` concentrates the rates
/// around their mean. Returns the dataset together with the ground-truth
/// rates.
pub fn gen_poisson_dirichlet(
    n: usize,
    alpha: f64,
    total_mass: Option<f64>,
    source: &mut RandomSource,
) -> Result<(Dataset, Vec<f64>)> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid("alpha", format!("must be positive, got {alpha}")));
    }
    let mass = total_mass.unwrap_or(n as f64);
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::invalid("total_mass", format!("must be positive, got {mass}")));
    }
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::invalid("alpha", format!("gamma draw failed: {e}")))?;
    let raw: Vec<f64> = (0..n).map(|_| gamma.sample(source)).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("alpha", "Dirichlet draw degenerated to all zeros"));
    }
    let rates: Vec<f64> = raw.iter().map(|x| mass * x / total).collect();
    let users = poisson_counts(&rates, source)?
        .into_iter()
        .map(|count| UserHistogram::new(1, [(0usize, count)]))
        .collect::<Result<Vec<_>>>()?;
    Ok((Dataset::new(users)?, rates))
}

/// One Poisson draw per rate; nonpositive rates yield 0.
pub fn poisson_counts(rates: &[f64], source: &mut RandomSource) -> Result<Vec<u64>> {
    rates
        .iter()
        .map(|&rate| {
            if rate > 0.0 {
                Poisson::new(rate)
                    .map(|p| p.sample(source) as u64)
                    .map_err(|e| Error::invalid("rate", e.to_string()))
            } else {
                Ok(0)
            }
        })
        .collect()
}

/// Distribution of per-user sample counts for the heavy-tailed generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum SizeLaw {
    /// Power-law sizes on `{1, 2, …}` with tail exponent `exponent > 1`.
    Zipf { exponent: f64 },
    /// Log-normal sizes, rounded to the nearest positive integer.
    LogNormal { mu: f64, sigma: f64 },
}

/// Sparse histograms with heterogeneous user sizes: each user draws a size
/// `m` from `size_law`, a support of `ceil(sqrt(m))` distinct items (capped
/// at `d`), exponential mixture weights over that support, and then `m`
/// categorical samples. Total count equals `m` for every user.
pub fn gen_heterogeneous_histograms(
    n: usize,
    d: usize,
    size_law: &SizeLaw,
    source: &mut RandomSource,
) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("n/d", "must both be at least 1"));
    }
    enum Law {
        Zipf(Zeta<f64>),
        LogNormal(LogNormal<f64>),
    }
    let law = match *size_law {
        SizeLaw::Zipf { exponent } => {
            if !(exponent > 1.0) || !exponent.is_finite() {
                return Err(Error::invalid(
                    "exponent",
                    format!("power-law exponent must exceed 1, got {exponent}"),
                ));
            }
            Law::Zipf(Zeta::new(exponent).map_err(|e| Error::invalid("exponent", e.to_string()))?)
        }
        SizeLaw::LogNormal { mu, sigma } => {
            if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
                return Err(Error::invalid(
                    "mu/sigma",
                    format!("log-normal needs finite mu and positive sigma, got ({mu}, {sigma})"),
                ));
            }
            Law::LogNormal(
                LogNormal::new(mu, sigma).map_err(|e| Error::invalid("mu/sigma", e.to_string()))?,
            )
        }
    };
    let users = (0..n)
        .map(|_| {
            let drawn = match &law {
                Law::Zipf(z) => z.sample(source),
                Law::LogNormal(ln) => ln.sample(source).round(),
            };
            let m = if drawn.is_finite() && drawn >= 1.0 {
                (drawn as u64).min(MAX_USER_SIZE)
            } else {
                1
            };
            let k = ((m as f64).sqrt().ceil() as usize).clamp(1, d);
            let support = rand::seq::index::sample(source, d, k).into_vec();
            let weights: Vec<f64> =
                (0..k).map(|_| source.sample::<f64, _>(Exp1).max(f64::MIN_POSITIVE)).collect();
            let picker = rand::distributions::WeightedIndex::new(&weights)
                .map_err(|e| Error::invalid("weights", e.to_string()))?;
            let mut counts = vec![0u64; k];
            for _ in 0..m {
                counts[picker.sample(source)] += 1;
            }
            let entries = support.into_iter().zip(counts).filter(|&(_, c)| c > 0);
            UserHistogram::new(d, entries)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(users)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    PoissonDirichlet,
    HeavyTail,
}

/// Declarative synthetic-dataset description, as used in experiment configs
/// and sidecar files. Fields beyond `generator`, `n`, `d`, and `seed` apply
/// only to the matching generator and are rejected otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub generator: GeneratorKind,
    pub n: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    /// Dirichlet concentration (Poisson-Dirichlet only; required there).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Sum of the generated rates (Poisson-Dirichlet only; defaults to `n`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_mass: Option<f64>,
    /// Size distribution (heavy-tail only; required there).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_law: Option<SizeLaw>,
    #[serde(default)]
    pub seed: u64,
}

fn default_d() -> usize {
    1
}

impl SyntheticSpec {
    /// Generates the dataset; identical specs produce identical datasets.
    /// The second component carries the ground-truth rates when the
    /// generator defines them.
    pub fn generate(&self) -> Result<(Dataset, Option<Vec<f64>>)> {
        self.generate_seeded(self.seed)
    }

    /// As [`generate`](Self::generate) but with the seed overridden — used
    /// by sweeps that rerun one spec under derived seeds.
    pub fn generate_seeded(&self, seed: u64) -> Result<(Dataset, Option<Vec<f64>>)> {
        let mut source = RandomSource::new(seed);
        match self.generator {
            GeneratorKind::PoissonDirichlet => {
                if self.d != 1 {
                    return Err(Error::invalid(
                        "d",
                        "poisson-dirichlet generates single-item count data; set d = 1",
                    ));
                }
                if self.size_law.is_some() {
                    return Err(Error::invalid("size_law", "not used by poisson-dirichlet"));
                }
                let alpha = self
                    .alpha
                    .ok_or_else(|| Error::invalid("alpha", "required for poisson-dirichlet"))?;
                let (dataset, rates) =
                    gen_poisson_dirichlet(self.n, alpha, self.total_mass, &mut source)?;
                Ok((dataset, Some(rates)))
            }
            GeneratorKind::HeavyTail => {
                if self.alpha.is_some() || self.total_mass.is_some() {
                    return Err(Error::invalid(
                        "alpha/total_mass",
                        "not used by the heavy-tail generator",
                    ));
                }
                let law = self
                    .size_law
                    .ok_or_else(|| Error::invalid("size_law", "required for heavy-tail"))?;
                let dataset = gen_heterogeneous_histograms(self.n, self.d, &law, &mut source)?;
                Ok((dataset, None))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write as IoWrite;

    fn temp_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn csv_duplicate_pairs_are_summed() {
        let f = temp_file("user_id,item,count\nu1,a,2\nu1,a,3\n");
        let ds = load_dataset(f.path(), FileFormat::Csv, None).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.domain(), 1);
        assert_eq!(ds.users()[0].get(0), 5);
    }

    #[test]
    fn top_d_keeps_largest_aggregates() {
        let f = temp_file("user_id,item,count\nu1,a,10\nu2,b,3\n");
        let ds = load_dataset(f.path(), FileFormat::Csv, Some(1)).unwrap();
        assert_eq!(ds.domain(), 1);
        // u1 holds the kept item; u2 becomes an empty histogram.
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.users()[0].get(0), 10);
        assert_eq!(ds.users()[1].l1(), 0.0);
        assert!(load_dataset(f.path(), FileFormat::Csv, Some(3)).is_err());
        assert!(load_dataset(f.path(), FileFormat::Csv, Some(0)).is_err());
    }

    #[test]
    fn items_ordered_by_count_then_name() {
        let f = temp_file("user_id,item,count\nu1,x,5\nu1,a,5\nu1,b,9\n");
        let ds = load_dataset(f.path(), FileFormat::Csv, None).unwrap();
        // b (9) first, then the tie a/x by name.
        let u = &ds.users()[0];
        assert_eq!((u.get(0), u.get(1), u.get(2)), (9, 5, 5));
        let f2 = temp_file("user_id,item,count\nu1,b,9\nu1,a,5\nu1,x,5\n");
        let ds2 = load_dataset(f2.path(), FileFormat::Csv, None).unwrap();
        assert_eq!(ds, ds2, "row order must not matter");
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let f = temp_file("user_id,item,count\nu1,a,2\nu2,b,not-a-number\n");
        match load_dataset(f.path(), FileFormat::Csv, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = temp_file("user_id,item,count\nu1,a,0\n");
        assert!(matches!(
            load_dataset(f.path(), FileFormat::Csv, None),
            Err(Error::Parse { line: 2, .. })
        ));
        let f = temp_file("user_id,item,count\nu1,a,-3\n");
        assert!(matches!(load_dataset(f.path(), FileFormat::Csv, None), Err(Error::Parse { .. })));
        let f = temp_file("id,thing,count\nu1,a,1\n");
        assert!(matches!(
            load_dataset(f.path(), FileFormat::Csv, None),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn jsonl_parses_and_reports_lines() {
        let f = temp_file(
            "{\"user_id\":\"u1\",\"item\":\"a\",\"count\":2}\n\n{\"user_id\":\"u2\",\"item\":\"b\",\"count\":1}\n",
        );
        let ds = load_dataset(f.path(), FileFormat::Jsonl, None).unwrap();
        assert_eq!(ds.len(), 2);
        let f = temp_file("{\"user_id\":\"u1\",\"item\":\"a\",\"count\":-2}\n");
        assert!(matches!(
            load_dataset(f.path(), FileFormat::Jsonl, None),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn round_trip_identity_both_formats() {
        // A dataset whose aggregates are nonincreasing in the index (as
        // top-d restriction produces).
        let users = vec![
            UserHistogram::new(3, [(0, 5u64), (1, 2), (2, 1)]).unwrap(),
            UserHistogram::new(3, [(0, 4), (1, 3)]).unwrap(),
            UserHistogram::new(3, [(2, 2)]).unwrap(),
        ];
        let ds = Dataset::new(users).unwrap();
        for format in [FileFormat::Csv, FileFormat::Jsonl] {
            let f = tempfile::NamedTempFile::new().unwrap();
            write_dataset(&ds, f.path(), format).unwrap();
            let back = load_dataset(f.path(), format, None).unwrap();
            assert_eq!(back, ds, "round trip failed for {format:?}");
        }
    }

    #[test]
    fn dirichlet_rates_sum_to_mass_and_concentrate() {
        let mut src = RandomSource::new(11);
        let n = 1000;
        let (ds, rates) = gen_poisson_dirichlet(n, 1e6, Some(1000.0), &mut src).unwrap();
        assert_eq!(ds.len(), n);
        assert_eq!(ds.domain(), 1);
        let mean = rates.iter().sum::<f64>() / n as f64;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-12);
        let variance = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(variance < 1e-6, "variance {variance} too large for alpha = 1e6");
        // Counts average near the mean rate (3 standard errors).
        let count_mean =
            ds.users().iter().map(|u| u.get(0) as f64).sum::<f64>() / n as f64;
        let se = (mean / n as f64).sqrt();
        assert!((count_mean - mean).abs() <= 3.0 * se, "count mean {count_mean}");
    }

    #[test]
    fn dirichlet_spread_grows_as_alpha_shrinks() {
        let mut src = RandomSource::new(4);
        let n = 2000;
        let (_, tight) = gen_poisson_dirichlet(n, 1000.0, None, &mut src).unwrap();
        let (_, loose) = gen_poisson_dirichlet(n, 0.5, None, &mut src).unwrap();
        let var = |rates: &[f64]| {
            let m = rates.iter().sum::<f64>() / rates.len() as f64;
            rates.iter().map(|r| (r - m).powi(2)).sum::<f64>() / rates.len() as f64
        };
        assert!(var(&loose) > 10.0 * var(&tight));
        assert!(gen_poisson_dirichlet(0, 1.0, None, &mut src).is_err());
        assert!(gen_poisson_dirichlet(5, 0.0, None, &mut src).is_err());
        assert!(gen_poisson_dirichlet(5, 1.0, Some(-1.0), &mut src).is_err());
    }

    #[test]
    fn heavy_tail_sizes_match_l1_and_stay_sparse() {
        let mut src = RandomSource::new(21);
        let law = SizeLaw::LogNormal { mu: 3.0, sigma: 1.0 };
        let ds = gen_heterogeneous_histograms(300, 5000, &law, &mut src).unwrap();
        // Size = l1 by construction; sparsity well below the domain.
        let mut l0s: Vec<usize> = ds.users().iter().map(|u| u.l0()).collect();
        l0s.sort_unstable();
        let median = l0s[l0s.len() / 2];
        assert!(median < 50, "median support {median} not sparse");
        for u in ds.users() {
            let m: u64 = u.entries().map(|(_, c)| c).sum();
            assert_eq!(m as f64, u.l1());
            assert!(m >= 1);
        }
    }

    #[test]
    fn zipf_limit_degenerates_to_minimum_size() {
        let mut src = RandomSource::new(3);
        let ds =
            gen_heterogeneous_histograms(200, 10, &SizeLaw::Zipf { exponent: 1e9 }, &mut src)
                .unwrap();
        assert!(ds.users().iter().all(|u| u.l1() == 1.0));
        assert!(gen_heterogeneous_histograms(
            5,
            10,
            &SizeLaw::Zipf { exponent: 1.0 },
            &mut src
        )
        .is_err());
        assert!(gen_heterogeneous_histograms(
            5,
            10,
            &SizeLaw::LogNormal { mu: 0.0, sigma: 0.0 },
            &mut src
        )
        .is_err());
    }

    #[test]
    fn synthetic_spec_dispatch_and_validation() {
        let spec = SyntheticSpec {
            generator: GeneratorKind::PoissonDirichlet,
            n: 50,
            d: 1,
            alpha: Some(10.0),
            total_mass: None,
            size_law: None,
            seed: 9,
        };
        let (a, rates_a) = spec.generate().unwrap();
        let (b, rates_b) = spec.generate().unwrap();
        assert_eq!(a, b, "same spec must generate identical datasets");
        assert_eq!(rates_a, rates_b);
        let mean = rates_a.unwrap().iter().sum::<f64>() / 50.0;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-12);

        let bad_d = SyntheticSpec { d: 2, ..spec.clone() };
        assert!(bad_d.generate().is_err());
        let missing_alpha = SyntheticSpec { alpha: None, ..spec.clone() };
        assert!(missing_alpha.generate().is_err());

        let tail = SyntheticSpec {
            generator: GeneratorKind::HeavyTail,
            n: 20,
            d: 40,
            alpha: None,
            total_mass: None,
            size_law: Some(SizeLaw::Zipf { exponent: 2.0 }),
            seed: 1,
        };
        let (ds, rates) = tail.generate().unwrap();
        assert_eq!(ds.domain(), 40);
        assert!(rates.is_none());
        let stray = SyntheticSpec { alpha: Some(1.0), ..tail.clone() };
        assert!(stray.generate().is_err());
        let missing_law = SyntheticSpec { size_law: None, ..tail };
        assert!(missing_law.generate().is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = SyntheticSpec {
            generator: GeneratorKind::HeavyTail,
            n: 10,
            d: 100,
            alpha: None,
            total_mass: None,
            size_law: Some(SizeLaw::LogNormal { mu: 3.0, sigma: 1.0 }),
            seed: 5,
        };
        let text = serde_json::to_string(&spec).unwrap();
        let back: SyntheticSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        // Unknown keys are rejected.
        let bad = "{\"generator\":\"heavy-tail\",\"n\":10,\"oops\":1}";
        assert!(serde_json::from_str::<SyntheticSpec>(bad).is_err());
    }
}
