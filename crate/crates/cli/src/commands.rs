//! Subcommand arguments and implementations.
//!
//! Every flag is optional at the clap level so a config file can supply it;
//! required values are checked after the merge.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tokenrank::dump::{list_dumps, load_records, read_token_dump};
use tokenrank::eval::{negative_baseline, summarize_timings};
use tokenrank::pq::{mean_reconstruction_error, train_codebooks, DEFAULT_CENTROIDS};
use tokenrank::rerank::remote::ENDPOINT_ENV;
use tokenrank::robustness::{robustness_curve, Extractor, PatchExtractor, RemoteExtractor};
use tokenrank::search::SHORTLIST_SWEEP;
use tokenrank::{
    build_index as write_index, evaluate, global_topk, open_index, rerank as rerank_one,
    write_atomic, ClientConfig, Compression, FusionConfig, Image, IndexConfig, MockScorer,
    PqCodebooks, PromptId, Qrels, RankedList, RemoteScorer, Scorer, SelectionConfig, Shortlist,
    TokenGrid, TransformKind,
};

use crate::csvio;
use crate::UsageError;

fn is_false(b: &bool) -> bool {
    !*b
}

fn need<T: Clone>(value: &Option<T>, flag: &str) -> anyhow::Result<T> {
    value
        .clone()
        .ok_or_else(|| UsageError(format!("missing required --{flag}")).into())
}

fn parse_flag<T>(text: &str, flag: &str) -> anyhow::Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    text.parse()
        .map_err(|e| UsageError(format!("--{flag}: {e}")).into())
}

fn write_output(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Mock,
    Remote,
}

/// Pair-scorer selection shared by `rerank`, `robustness` and `bench`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ScorerArgs {
    /// Pair scorer [default: mock].
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scorer: Option<ScorerKind>,
    /// Scoring service base URL (falls back to TOKENRANK_ENDPOINT).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Candidates per request [default: 8].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Concurrent requests [default: 4].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub in_flight: Option<usize>,
    /// Per-request timeout in seconds [default: 120].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<f64>,
    /// Retries after a failed request [default: 2].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retries: Option<usize>,
}

impl ScorerArgs {
    fn kind(&self) -> ScorerKind {
        self.scorer.unwrap_or(ScorerKind::Mock)
    }

    pub fn client_config(&self) -> anyhow::Result<ClientConfig> {
        let endpoint = match &self.endpoint {
            Some(e) => e.clone(),
            None => std::env::var(ENDPOINT_ENV).map_err(|_| {
                UsageError(format!(
                    "the remote scorer needs --endpoint or {ENDPOINT_ENV}"
                ))
            })?,
        };
        let mut cfg = ClientConfig::new(endpoint);
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(n) = self.in_flight {
            cfg.max_in_flight = n;
        }
        if let Some(t) = self.timeout_secs {
            cfg.timeout = Duration::try_from_secs_f64(t)
                .ok()
                .filter(|d| !d.is_zero())
                .ok_or_else(|| UsageError(format!("--timeout-secs: bad value {t}")))?;
        }
        if let Some(r) = self.retries {
            cfg.retries = r;
        }
        if cfg.batch_size == 0 || cfg.max_in_flight == 0 {
            return Err(UsageError("--batch-size and --in-flight must be positive".into()).into());
        }
        Ok(cfg)
    }

    /// The scorer, plus the client settings it was built from when remote.
    fn build(&self) -> anyhow::Result<(Box<dyn Scorer>, Option<ClientConfig>)> {
        Ok(match self.kind() {
            ScorerKind::Mock => (Box::new(MockScorer), None),
            ScorerKind::Remote => {
                let cfg = self.client_config()?;
                let scorer = RemoteScorer::connect(cfg.clone())
                    .with_context(|| format!("connecting to {}", cfg.endpoint))?;
                (Box::new(scorer), Some(cfg))
            }
        })
    }
}

fn parse_prompt(p: &Option<String>) -> anyhow::Result<PromptId> {
    parse_flag(p.as_deref().unwrap_or("object"), "prompt")
}

fn parse_lambda(l: Option<f64>) -> anyhow::Result<FusionConfig> {
    FusionConfig::new(l.unwrap_or(tokenrank::rerank::DEFAULT_LAMBDA))
        .map_err(|e| UsageError(format!("--lambda: {e}")).into())
}

/// Query token grids keyed by id, read from the `.tkdp` files in `dir`.
fn load_query_grids(dir: &Path) -> anyhow::Result<HashMap<String, TokenGrid>> {
    list_dumps(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .into_par_iter()
        .map(|(id, path)| {
            let grid =
                read_token_dump(&path).with_context(|| format!("reading {}", path.display()))?;
            Ok((id, grid))
        })
        .collect()
}

/// Re-ranks every shortlist. A remote scorer already fans out requests
/// within a query, so queries then run one at a time to keep the client's
/// in-flight limit global.
fn rerank_all(
    shortlists: &[Shortlist],
    index: &tokenrank::Index,
    queries: &HashMap<String, TokenGrid>,
    scorer: &dyn Scorer,
    parallel: bool,
    fusion: &FusionConfig,
    prompt: PromptId,
) -> anyhow::Result<Vec<RankedList>> {
    let one = |sl: &Shortlist| -> anyhow::Result<RankedList> {
        let grid = queries
            .get(&sl.query_id)
            .ok_or_else(|| anyhow::anyhow!("query `{}` has no token dump", sl.query_id))?;
        rerank_one(sl, index, grid, scorer, fusion, prompt)
            .with_context(|| format!("re-ranking query `{}`", sl.query_id))
    };
    if parallel {
        shortlists.par_iter().map(one).collect()
    } else {
        shortlists.iter().map(one).collect()
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct TrainPqArgs {
    /// Directory of `.tkdp` token dumps.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dumps: Option<PathBuf>,
    /// Subspace dimension; must divide the token dimension.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Centroids per subspace [default: 256].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Seed for k-means++ [default: 0].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Train on at most this many tokens, taken at an even stride.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    /// Codebook output file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

pub fn train_pq(a: &TrainPqArgs) -> anyhow::Result<()> {
    let dumps = need(&a.dumps, "dumps")?;
    let d = need(&a.d, "d")?;
    let out = need(&a.out, "out")?;
    let k = a.k.unwrap_or(DEFAULT_CENTROIDS);
    let files = list_dumps(&dumps).with_context(|| format!("listing {}", dumps.display()))?;
    if files.is_empty() {
        return Err(tokenrank::Error::EmptyCorpus).with_context(|| dumps.display().to_string());
    }
    let grids: Vec<TokenGrid> = files
        .par_iter()
        .map(|(_, p)| read_token_dump(p).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<_>>()?;
    let dim = grids[0].dim();
    if let Some(g) = grids.iter().find(|g| g.dim() != dim) {
        return Err(tokenrank::Error::DimensionMismatch {
            expected: dim,
            found: g.dim(),
        }
        .into());
    }
    let mut vectors: Vec<f32> = grids.iter().flat_map(|g| g.as_slice()).copied().collect();
    let total = vectors.len() / dim;
    if let Some(s) = a.sample.filter(|&s| s > 0 && s < total) {
        let stride = total.div_ceil(s);
        vectors = vectors
            .chunks_exact(dim)
            .step_by(stride)
            .flatten()
            .copied()
            .collect();
    }
    let cb = train_codebooks(&vectors, dim, d, k, a.seed.unwrap_or(0))?;
    let err = mean_reconstruction_error(&vectors, &cb);
    cb.save(&out)
        .with_context(|| format!("writing {}", out.display()))?;
    println!(
        "trained {} x {} centroids on {} of {} tokens; mean squared reconstruction error {err:.6}",
        cb.num_subspaces(),
        k,
        vectors.len() / dim,
        total
    );
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct BuildIndexArgs {
    /// Directory of `.tkdp` dumps with `.glob` sidecars.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dumps: Option<PathBuf>,
    /// `fp16`, `pq` or `pq:D` [default: fp16].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compression: Option<String>,
    /// Codebooks from `train-pq`; required for PQ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codebooks: Option<PathBuf>,
    /// `none`, `prune:N`, `cluster:N[:SEED]`, `sample2x2` or `pool2x2` [default: none].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub select: Option<String>,
    /// Index output file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Per-image byte breakdown as CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

fn index_config(a: &BuildIndexArgs) -> anyhow::Result<IndexConfig> {
    let selection: SelectionConfig = parse_flag(a.select.as_deref().unwrap_or("none"), "select")?;
    let compression = a.compression.as_deref().unwrap_or("fp16");
    if compression == "fp16" {
        if a.codebooks.is_some() {
            return Err(UsageError("--codebooks only applies to PQ compression".into()).into());
        }
        return Ok(IndexConfig::fp16(selection));
    }
    let wanted = match compression {
        "pq" => None,
        other => match parse_flag::<Compression>(other, "compression")? {
            Compression::Pq { sub_dim } => Some(sub_dim),
            Compression::Fp16 => unreachable!("handled above"),
        },
    };
    let path = need(&a.codebooks, "codebooks")?;
    let cb = PqCodebooks::load(&path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(d) = wanted.filter(|&d| d != cb.sub_dim()) {
        return Err(UsageError(format!(
            "--compression pq:{d} does not match codebooks with subspace dimension {}",
            cb.sub_dim()
        ))
        .into());
    }
    Ok(IndexConfig::pq(selection, Arc::new(cb)))
}

pub fn build_index(a: &BuildIndexArgs) -> anyhow::Result<()> {
    let dumps = need(&a.dumps, "dumps")?;
    let out = need(&a.out, "out")?;
    let cfg = index_config(a)?;
    let records = load_records(&dumps).with_context(|| format!("loading {}", dumps.display()))?;
    let report = write_index(&records, &cfg, &out)?;
    if let Some(path) = &a.report {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "image_id",
            "global",
            "payload",
            "positions",
            "metadata",
            "total",
        ])?;
        for (id, b) in &report.per_image {
            w.write_record([
                id.clone(),
                b.global.to_string(),
                b.payload.to_string(),
                b.positions.to_string(),
                b.metadata.to_string(),
                b.total().to_string(),
            ])?;
        }
        write_output(path, &w.into_inner().context("flushing CSV")?)?;
    }
    let t = report.totals();
    println!(
        "{} images, {} bytes ({}): payload {} (mean {:.1}/image), globals {}, positions {}, metadata {}, shared {}",
        report.num_images(),
        report.file_bytes(),
        cfg.compression,
        t.payload,
        report.mean_payload_per_image(),
        t.global,
        t.positions,
        t.metadata,
        report.shared
    );
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SearchArgs {
    /// Index built by `build-index`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
    /// Directory of query `.tkdp` dumps with `.glob` sidecars.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queries: Option<PathBuf>,
    /// Shortlist length [default: 1000].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Shortlist CSV output.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

pub fn search(a: &SearchArgs) -> anyhow::Result<()> {
    let index_path = need(&a.index, "index")?;
    let queries = need(&a.queries, "queries")?;
    let out = need(&a.out, "out")?;
    let k = a.k.unwrap_or(tokenrank::search::DEFAULT_SHORTLIST);
    if k == 0 {
        return Err(UsageError("--k must be positive".into()).into());
    }
    let index =
        open_index(&index_path).with_context(|| format!("opening {}", index_path.display()))?;
    let records =
        load_records(&queries).with_context(|| format!("loading {}", queries.display()))?;
    let shortlists: Vec<Shortlist> = records
        .par_iter()
        .map(|r| global_topk(&r.image_id, &r.global, &index, k))
        .collect::<tokenrank::Result<_>>()?;
    let n = shortlists.len();
    write_output(
        &out,
        &csvio::write_lists(&csvio::shortlists_to_lists(shortlists))?,
    )?;
    println!("{n} shortlists of up to {k} from {} images", index.len());
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct RerankArgs {
    /// Index built by `build-index`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
    /// Shortlist CSV from `search`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shortlists: Option<PathBuf>,
    /// Directory of query `.tkdp` dumps.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queries: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub scorer: ScorerArgs,
    /// Prompt template id [default: object].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    /// Weight of the re-ranking score in [0, 1] [default: 0.5].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Ranked CSV output.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

pub fn rerank(a: &RerankArgs) -> anyhow::Result<()> {
    let index_path = need(&a.index, "index")?;
    let shortlist_path = need(&a.shortlists, "shortlists")?;
    let queries = need(&a.queries, "queries")?;
    let out = need(&a.out, "out")?;
    let prompt = parse_prompt(&a.prompt)?;
    let fusion = parse_lambda(a.lambda)?;
    let index =
        open_index(&index_path).with_context(|| format!("opening {}", index_path.display()))?;
    let shortlists = csvio::read_shortlists(&shortlist_path)?;
    let grids = load_query_grids(&queries)?;
    let (scorer, _) = a.scorer.build()?;
    let parallel = a.scorer.kind() == ScorerKind::Mock;
    let lists = rerank_all(
        &shortlists,
        &index,
        &grids,
        scorer.as_ref(),
        parallel,
        &fusion,
        prompt,
    )?;
    write_output(&out, &csvio::write_lists(&lists)?)?;
    println!("re-ranked {} queries with {}", lists.len(), scorer.id());
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Ranked (or shortlist) CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranked: Option<PathBuf>,
    /// Relevance judgments: `query_id<TAB>image_id<TAB>relevance[<TAB>group]`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qrels: Option<PathBuf>,
    /// Rank cutoff [default: 1000].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Also report mAP per positive group.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub groups: bool,
    /// Report CSV output [default: stdout].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

pub fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    let ranked = need(&a.ranked, "ranked")?;
    let qrels_path = need(&a.qrels, "qrels")?;
    let k = a.k.unwrap_or(tokenrank::eval::DEFAULT_K);
    if k == 0 {
        return Err(UsageError("--k must be positive".into()).into());
    }
    let lists = csvio::read_lists(&ranked)?;
    let qrels =
        Qrels::load(&qrels_path).with_context(|| format!("reading {}", qrels_path.display()))?;
    let report = evaluate(&lists, &qrels, k, a.groups)?;
    match &a.out {
        Some(path) => {
            write_output(path, report.to_csv().as_bytes())?;
            println!(
                "mAP@{k} = {:.6} over {} queries",
                report.map_at_k,
                report.per_query.len()
            );
        }
        None => print!("{}", report.to_csv()),
    }
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct RobustnessArgs {
    /// Directory of query PNG images.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    /// Transform kind, e.g. `rotation` or `downscale`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// Number of strength levels [default: 10].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Seed for stochastic transforms [default: 0].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Background or occluder image for kinds that need one.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aux: Option<PathBuf>,
    /// Patch size of the built-in extractor used with the mock scorer [default: 16].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch: Option<u32>,
    /// Encoder resolution requested from the service's extractor.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<u32>,
    /// Fixed similarity baseline for the crossing point.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
    /// Directory of negative PNGs; the baseline becomes the mean over
    /// queries of the 5th percentile of query-versus-negative scores.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negatives: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub scorer: ScorerArgs,
    /// Prompt template id [default: object].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    /// Curve CSV output.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn load_pngs(dir: &Path) -> anyhow::Result<Vec<Image>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| {
        p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"))
    });
    paths.sort();
    if paths.is_empty() {
        return Err(tokenrank::Error::EmptyCorpus)
            .with_context(|| format!("no PNG files in {}", dir.display()));
    }
    paths
        .par_iter()
        .map(|p| Image::load_png(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

pub fn robustness(a: &RobustnessArgs) -> anyhow::Result<()> {
    let images = need(&a.images, "images")?;
    let kind: TransformKind = parse_flag(&need(&a.kind, "kind")?, "kind")?;
    let out = need(&a.out, "out")?;
    let n = a.n.unwrap_or(10);
    let seed = a.seed.unwrap_or(0);
    let prompt = parse_prompt(&a.prompt)?;
    if a.baseline.is_some() && a.negatives.is_some() {
        return Err(UsageError("--baseline and --negatives are mutually exclusive".into()).into());
    }
    if kind.needs_aux() && a.aux.is_none() {
        return Err(UsageError(format!("--kind {kind} needs --aux")).into());
    }
    let aux = a
        .aux
        .as_deref()
        .map(|p| Image::load_png(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?
        .map(Arc::new);
    let queries = load_pngs(&images)?;
    let (scorer, remote) = a.scorer.build()?;
    // sharing the client settings makes extraction count against the
    // scorer's in-flight limit
    let extractor: Box<dyn Extractor> = match &remote {
        None => Box::new(PatchExtractor::new(a.patch.unwrap_or(16))),
        Some(cfg) => Box::new(RemoteExtractor::new(cfg, a.resolution)),
    };
    let curve = robustness_curve(
        scorer.as_ref(),
        extractor.as_ref(),
        &queries,
        kind,
        n,
        seed,
        aux,
        prompt,
    )?;
    write_output(&out, curve.to_csv().as_bytes())?;
    let baseline = match (a.baseline, &a.negatives) {
        (Some(b), _) => Some(b),
        (None, Some(dir)) => {
            let negatives = load_pngs(dir)?;
            let neg_grids: Vec<TokenGrid> = negatives
                .par_iter()
                .map(|img| extractor.extract(img))
                .collect::<tokenrank::Result<_>>()?;
            let per_query: Vec<(String, Vec<f64>)> = queries
                .par_iter()
                .enumerate()
                .map(|(i, q)| {
                    let grid = extractor.extract(q)?;
                    Ok((
                        i.to_string(),
                        scorer.score_batch(&grid, &neg_grids, prompt)?,
                    ))
                })
                .collect::<tokenrank::Result<_>>()?;
            Some(negative_baseline(&per_query)?)
        }
        (None, None) => None,
    };
    if let Some(b) = baseline {
        match curve.crossing(b)? {
            Some(x) => println!("baseline {b:.6}; crossing point {x:.6}"),
            None => println!("baseline {b:.6}; no crossing"),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    /// Index built by `build-index`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
    /// Directory of query `.tkdp` dumps with `.glob` sidecars.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queries: Option<PathBuf>,
    /// Shortlist sizes to time [default: 10,50,100,200,400,1000,5000].
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_sweep: Option<Vec<usize>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub scorer: ScorerArgs,
    /// Prompt template id [default: object].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    /// Weight of the re-ranking score in [0, 1] [default: 0.5].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Timing CSV output.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

pub fn bench(a: &BenchArgs) -> anyhow::Result<()> {
    let index_path = need(&a.index, "index")?;
    let queries = need(&a.queries, "queries")?;
    let out = need(&a.out, "out")?;
    let sweep = a
        .k_sweep
        .clone()
        .unwrap_or_else(|| SHORTLIST_SWEEP.to_vec());
    if sweep.is_empty() || sweep.contains(&0) {
        return Err(UsageError("--k-sweep needs positive sizes".into()).into());
    }
    let prompt = parse_prompt(&a.prompt)?;
    let fusion = parse_lambda(a.lambda)?;
    let index =
        open_index(&index_path).with_context(|| format!("opening {}", index_path.display()))?;
    let records =
        load_records(&queries).with_context(|| format!("loading {}", queries.display()))?;
    if records.is_empty() {
        return Err(tokenrank::Error::EmptyCorpus).with_context(|| queries.display().to_string());
    }
    let (scorer, _) = a.scorer.build()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "queries", "mean_s", "p50_s", "p95_s", "min_s", "max_s"])?;
    for &k in &sweep {
        let mut samples = Vec::with_capacity(records.len());
        for r in &records {
            let start = Instant::now();
            let sl = global_topk(&r.image_id, &r.global, &index, k)?;
            rerank_one(&sl, &index, &r.grid, scorer.as_ref(), &fusion, prompt)?;
            samples.push(start.elapsed().as_secs_f64());
        }
        let t = summarize_timings(&samples).expect("non-empty query set");
        w.write_record([
            k.to_string(),
            t.samples.to_string(),
            t.mean.to_string(),
            t.p50.to_string(),
            t.p95.to_string(),
            t.min.to_string(),
            t.max.to_string(),
        ])?;
        println!(
            "k={k}: mean {:.6}s p95 {:.6}s over {} queries",
            t.mean, t.p95, t.samples
        );
    }
    write_output(&out, &w.into_inner().context("flushing CSV")?)?;
    Ok(())
}
