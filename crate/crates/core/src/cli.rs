//! Command-line front end.
//!
//! Exit codes: 0 success, 1 when any file fails or a QC item is flagged,
//! 2 for usage and input-format errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brain_extraction::{fallback_extract, BrainMaskSource, ExtractionConfig};
use crate::defacing::{deface, generate_template_pack, quickshear, DefaceConfig, TemplatePack, DEFAULT_BUFFER_MM, DEFAULT_FACE_PAD_MM, DEFAULT_MARGIN_MM};
use crate::error::{Error, Result};
use crate::evaluation::{pair_dice, QcReport, DEFAULT_FLAG_THRESHOLD};
use crate::geometry::reorient_to_canonical;
use crate::morphology::{dilate, BinaryMask};
use crate::nifti::{read_nifti, read_volume, write_nifti, write_volume};
use crate::registration::RegistrationConfig;
use crate::volume::Volume;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "deface", version, about = "Brain-safe defacing of NIfTI head MRI")]
pub struct Cli {
    /// Files processed concurrently
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: u32,
    /// Seed for registration sampling
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Repeat for more log output
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Remove the face through template registration, never touching the brain
    Deface(DefaceArgs),
    /// Cut along a plane fitted to the brain mask's sagittal hull
    Quickshear(QuickshearArgs),
    /// Brain-mask Dice between original and defaced volumes
    Qc(QcArgs),
    /// Build a template pack (stripped template + keep-mask) from a head template
    MakeTemplatePack(TemplatePackArgs),
}

#[derive(Debug, Args)]
pub struct DefaceArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Skull-stripped template volume
    #[arg(long)]
    pub template: PathBuf,
    /// Keep-mask on the template grid (1 = keep)
    #[arg(long)]
    pub face_mask: PathBuf,
    /// Brain mask per input, in input order
    #[arg(long, conflicts_with = "brain_stripped")]
    pub brain_mask: Vec<PathBuf>,
    /// Skull-stripped volume per input, binarised at --threshold
    #[arg(long)]
    pub brain_stripped: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MARGIN_MM)]
    pub margin_mm: f64,
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    /// JSON file overriding registration settings
    #[arg(long)]
    pub registration_config: Option<PathBuf>,
    /// Defaults to each input's directory
    #[arg(long, short)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QuickshearArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub brain_mask: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BUFFER_MM)]
    pub buffer_mm: f64,
    #[arg(long, short)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QcArgs {
    /// Lines of `original defaced`; `#` starts a comment
    pub manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FLAG_THRESHOLD)]
    pub threshold: f64,
    /// Report paths default to the manifest stem with _qc.json / _qc.txt
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TemplatePackArgs {
    /// Head (or skull-stripped) template volume
    pub template: PathBuf,
    /// Template brain mask; the built-in extractor is used when absent
    #[arg(long)]
    pub brain_mask: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BUFFER_MM)]
    pub buffer_mm: f64,
    #[arg(long, default_value_t = DEFAULT_FACE_PAD_MM)]
    pub pad_mm: f64,
    #[arg(long)]
    pub out_template: PathBuf,
    #[arg(long)]
    pub out_face_mask: PathBuf,
}

/// Settings shared by every file of a `deface` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub margin_mm: f64,
    pub threshold: f64,
    pub registration: RegistrationConfig,
    pub output_dir: Option<PathBuf>,
    pub jobs: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin_mm >= 0.0) {
            return Err(Error::InvalidConfig(format!("margin_mm must be nonnegative, got {}", self.margin_mm)));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidConfig("jobs must be at least 1".into()));
        }
        self.registration.validate()
    }

    fn deface_config(&self) -> DefaceConfig {
        let mut registration = self.registration.clone();
        registration.seed = self.seed;
        DefaceConfig {
            margin_mm: self.margin_mm,
            extraction: ExtractionConfig {
                threshold: self.threshold,
                ..ExtractionConfig::default()
            },
            registration,
        }
    }
}

/// Splits `name.nii.gz` / `name.nii` into `("name", ".nii.gz")`.
pub fn split_nifti_name(path: &Path) -> (String, &'static str) {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    for ext in [".nii.gz", ".nii"] {
        if let Some(stem) = name.strip_suffix(ext) {
            return (stem.to_string(), if ext == ".nii.gz" { ".nii.gz" } else { ".nii" });
        }
    }
    (name, ".nii.gz")
}

fn output_path(input: &Path, dir: Option<&Path>, suffix: &str, ext: &str) -> PathBuf {
    let (stem, _) = split_nifti_name(input);
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
    dir.join(format!("{stem}{suffix}{ext}"))
}

/// Paths written for one `deface` input.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaceOutputs {
    pub defaced: PathBuf,
    pub brain_safe: PathBuf,
    pub transform: PathBuf,
    pub provenance: PathBuf,
}

impl DefaceOutputs {
    pub fn for_input(input: &Path, dir: Option<&Path>) -> Self {
        let (_, ext) = split_nifti_name(input);
        DefaceOutputs {
            defaced: output_path(input, dir, "_defaced", ext),
            brain_safe: output_path(input, dir, "_brainsafe", ext),
            transform: output_path(input, dir, "_xfm", ".txt"),
            provenance: output_path(input, dir, "_prov", ".json"),
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn tagged(name: &'static str, r: Result<()>) -> Result<()> {
    r.map_err(|e| Error::Stage {
        stage: 0,
        name,
        source: Box::new(e),
    })
}

fn deface_one(input: &Path, source: &BrainMaskSource, pack: &TemplatePack, run: &RunConfig) -> Result<DefaceOutputs> {
    let (volume, sidecar) = read_nifti(input).map_err(|e| Error::Stage {
        stage: 0,
        name: "read_input",
        source: Box::new(e),
    })?;
    let result = deface(&volume, pack, source, &run.deface_config())?;
    let out = DefaceOutputs::for_input(input, run.output_dir.as_deref());
    tagged("write_outputs", (|| {
        write_nifti(&result.defaced, &sidecar, &out.defaced)?;
        write_volume(&result.brain_safe_mask.to_volume(), &out.brain_safe)?;
        write_text(&out.transform, &result.transform.to_text())?;
        let json = serde_json::to_string_pretty(&result.provenance).expect("provenance serialises");
        write_text(&out.provenance, &json)
    })())?;
    Ok(out)
}

fn load_registration_config(path: Option<&Path>) -> Result<RegistrationConfig> {
    match path {
        None => Ok(RegistrationConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))
        }
    }
}

fn cmd_deface(args: &DefaceArgs, cli: &Cli) -> i32 {
    let per_input = |v: &Vec<PathBuf>| !v.is_empty() && v.len() != args.inputs.len();
    if per_input(&args.brain_mask) || per_input(&args.brain_stripped) {
        eprintln!("error: give one --brain-mask / --brain-stripped per input ({} inputs)", args.inputs.len());
        return EXIT_USAGE;
    }
    let registration = match load_registration_config(args.registration_config.as_deref()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let run = RunConfig {
        margin_mm: args.margin_mm,
        threshold: args.threshold,
        registration,
        output_dir: args.output_dir.clone(),
        jobs: cli.jobs as usize,
        seed: cli.seed,
    };
    if let Err(e) = run.validate() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    let pack = match TemplatePack::load(&args.template, &args.face_mask) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: template pack: {e}");
            return EXIT_FAILURE;
        }
    };
    if let Some(dir) = &run.output_dir {
        if let Err(e) = fs::create_dir_all(dir) {
            eprintln!("error: {}: {e}", dir.display());
            return EXIT_FAILURE;
        }
    }
    let sources: Vec<BrainMaskSource> = (0..args.inputs.len())
        .map(|i| {
            if let Some(p) = args.brain_mask.get(i) {
                BrainMaskSource::ExternalMask(p.clone())
            } else if let Some(p) = args.brain_stripped.get(i) {
                BrainMaskSource::ExternalStripped(p.clone())
            } else {
                BrainMaskSource::Fallback
            }
        })
        .collect();

    let outcomes = with_pool(run.jobs, || {
        args.inputs
            .par_iter()
            .zip(sources.par_iter())
            .map(|(input, source)| deface_one(input, source, &pack, &run))
            .collect::<Vec<_>>()
    });
    let mut failed = 0;
    for (input, outcome) in args.inputs.iter().zip(outcomes) {
        match outcome {
            Ok(out) => log::info!("{} -> {}", input.display(), out.defaced.display()),
            Err(e) => {
                failed += 1;
                eprintln!("{}: {e}", input.display());
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} of {} inputs failed", args.inputs.len());
        EXIT_FAILURE
    } else {
        EXIT_OK
    }
}

fn cmd_quickshear(args: &QuickshearArgs) -> i32 {
    let run = || -> Result<PathBuf> {
        let (volume, sidecar) = read_nifti(&args.input)?;
        let mask_volume = read_volume(&args.brain_mask)?;
        let brain = BinaryMask::from_volume(&mask_volume);
        let sheared = quickshear(&volume, &brain, args.buffer_mm)?;
        let (_, ext) = split_nifti_name(&args.input);
        let out = output_path(&args.input, args.output_dir.as_deref(), "_quickshear", ext);
        if let Some(dir) = &args.output_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        write_nifti(&sheared, &sidecar, &out)?;
        Ok(out)
    };
    match run() {
        Ok(out) => {
            log::info!("wrote {}", out.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}: {e}", args.input.display());
            EXIT_FAILURE
        }
    }
}

/// Two whitespace-separated paths per line; blank lines and `#` comments
/// are skipped. Relative paths resolve against the manifest's directory.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse(format!("manifest line {}: expected 2 paths, found {}", n + 1, fields.len())));
        }
        let resolve = |s: &str| {
            let p = PathBuf::from(s);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        pairs.push((resolve(fields[0]), resolve(fields[1])));
    }
    if pairs.is_empty() {
        return Err(Error::Parse("manifest lists no pairs".into()));
    }
    Ok(pairs)
}

fn cmd_qc(args: &QcArgs, cli: &Cli) -> i32 {
    let pairs = match fs::read_to_string(&args.manifest)
        .map_err(|e| Error::io(&args.manifest, e))
        .and_then(|t| parse_manifest(&t, args.manifest.parent().unwrap_or(Path::new(""))))
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let config = ExtractionConfig::default();
    let outcomes = with_pool(cli.jobs as usize, || {
        pairs
            .par_iter()
            .map(|(a, b)| {
                let id = format!("{} {}", a.display(), b.display());
                let dice = (|| {
                    let original = read_volume(a)?;
                    let defaced = read_volume(b)?;
                    pair_dice(&original, &defaced, &BrainMaskSource::Fallback, &config)
                })();
                (id, dice)
            })
            .collect::<Vec<_>>()
    });
    let report = QcReport::from_outcomes(outcomes, args.threshold);
    let (stem, _) = split_nifti_name(&args.manifest);
    let stem = stem.rsplit_once('.').map(|(s, _)| s.to_string()).unwrap_or(stem);
    let dir = args.manifest.parent().unwrap_or(Path::new(""));
    let json_path = args.json.clone().unwrap_or_else(|| dir.join(format!("{stem}_qc.json")));
    let text_path = args.text.clone().unwrap_or_else(|| dir.join(format!("{stem}_qc.txt")));
    let text = report.to_text();
    let json = serde_json::to_string_pretty(&report).expect("report serialises");
    if let Err(e) = write_text(&json_path, &json).and_then(|_| write_text(&text_path, &text)) {
        eprintln!("error: {e}");
        return EXIT_FAILURE;
    }
    print!("{text}");
    if report.passed() {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

/// Brain mask for a template given without one. When all foreground lies
/// within `pad_mm` of the extracted brain the template is taken as
/// skull-stripped and its support is the brain.
fn template_brain(head: &Volume, pad_mm: f64) -> Result<BinaryMask> {
    let (canonical, perm) = reorient_to_canonical(head)?;
    let extracted = fallback_extract(&canonical, &ExtractionConfig::default())?;
    let support = BinaryMask {
        grid: canonical.grid.clone(),
        bits: canonical.data.iter().map(|&v| (v != canonical.background) as u8).collect(),
    };
    let m = if support.is_subset_of(&dilate(&extracted, pad_mm)) { support } else { extracted };
    Ok(BinaryMask {
        grid: head.grid.clone(),
        bits: perm.inverse().apply_data(&m.bits, canonical.grid.dims),
    })
}

fn cmd_make_template_pack(args: &TemplatePackArgs) -> i32 {
    let head = match read_volume(&args.template) {
        Ok(v) => v,
        Err(e @ (Error::UnsupportedDims(_) | Error::NotNifti(_))) => {
            eprintln!("{}: {e}", args.template.display());
            return EXIT_USAGE;
        }
        Err(e) => {
            eprintln!("{}: {e}", args.template.display());
            return EXIT_FAILURE;
        }
    };
    let build = || -> Result<TemplatePack> {
        let brain = match &args.brain_mask {
            Some(p) => BinaryMask::from_volume(&read_volume(p)?),
            None => template_brain(&head, args.pad_mm)?,
        };
        let pack = generate_template_pack(&head, &brain, args.buffer_mm, args.pad_mm)?;
        pack.save(&args.out_template, &args.out_face_mask)?;
        Ok(pack)
    };
    match build() {
        Ok(pack) => {
            let removed = pack.face_mask.bits.len() - pack.face_mask.count();
            log::info!("template pack written; keep-mask removes {removed} voxels");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}: {e}", args.template.display());
            EXIT_FAILURE
        }
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match &cli.command {
        Command::Deface(a) => cmd_deface(a, &cli),
        Command::Quickshear(a) => cmd_quickshear(a),
        Command::Qc(a) => cmd_qc(a, &cli),
        Command::MakeTemplatePack(a) => cmd_make_template_pack(a),
    }
}
