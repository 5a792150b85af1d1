//! Command-line front end. Exit codes: 0 success, 1 algorithmic failure,
//! 2 configuration or I/O error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::camera::CameraModel;
use crate::error::{Error, Result, Stage};
use crate::features::{encode_cloud, encode_image, read_sidecar, KeypointSpace};
use crate::groundtruth::{
    parse_vicon_csv, plate_frame, sync_frames, to_common_frame, MarkerPlate, ViconSchema,
};
use crate::metrics::{
    absolute_errors, emit_report, method_difference, per_axis_errors, relative_errors, EvalReport,
    MethodReport, ReportFormat, SequenceReport,
};
use crate::mla::parse_mla_xml;
use crate::pnp::{register_pnp_pipeline, PnpParams, ReferenceCamera};
use crate::ransac3d::{chain_extrinsic_ransac, describe_chain, register_ransac3d, Ransac3dParams};
use crate::se3::Pose;
use crate::synth::{generate_scene, generate_trajectory, MotionModel, SceneSpec, TrajectorySpec};

pub const SEED_ENV: &str = "PLENREG_SEED";

#[derive(Debug, Parser)]
#[command(name = "plenreg", version, about = "Extrinsic registration of plenoptic camera rigs")]
pub struct Cli {
    /// RNG seed. Precedence: flag, PLENREG_SEED, config file, 0.
    #[arg(long, global = true, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an MLA calibration XML file and print it normalized.
    ParseMla(ParseMlaArgs),
    /// Estimate the camera-X-from-camera-0 extrinsic.
    #[command(subcommand)]
    Register(RegisterCommand),
    /// Resample a motion-capture export to camera frames in the plate frame.
    Align(AlignArgs),
    /// Compare estimated poses against ground truth.
    Evaluate(EvaluateArgs),
    /// Write a synthetic scene with known ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ParseMlaArgs {
    pub file: PathBuf,
    /// JSON instead of normalized XML.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum RegisterCommand {
    /// Align the two reconstructed feature clouds.
    Ransac3d(Ransac3dArgs),
    /// Resect camera X against camera 0's cloud.
    Pnp(PnpArgs),
}

#[derive(Debug, Args)]
pub struct CommonRegisterArgs {
    /// Run configuration; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parameter file; overrides the parameter table of `--config`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub min_inliers: Option<usize>,
    #[arg(long)]
    pub confidence: Option<f64>,
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct Ransac3dArgs {
    #[arg(long)]
    pub cloud0: Option<PathBuf>,
    #[arg(long = "cloudX", alias = "cloudx", alias = "cloud-x")]
    pub cloud_x: Option<PathBuf>,
    /// `C0 ← W0` pose JSON.
    #[arg(long)]
    pub calib0: Option<PathBuf>,
    /// `CX ← WX` pose JSON.
    #[arg(long = "calibX", alias = "calibx", alias = "calib-x")]
    pub calib_x: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonRegisterArgs,
}

#[derive(Debug, Args)]
pub struct PnpArgs {
    #[arg(long)]
    pub image_features: Option<PathBuf>,
    #[arg(long)]
    pub cloud0: Option<PathBuf>,
    /// Camera X model JSON.
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// `C0 ← W0` pose JSON.
    #[arg(long)]
    pub calib0: Option<PathBuf>,
    /// Camera 0 model JSON; defaults to `--intrinsics`.
    #[arg(long)]
    pub intrinsics0: Option<PathBuf>,
    #[arg(long)]
    pub fm_threshold: Option<f64>,
    #[command(flatten)]
    pub common: CommonRegisterArgs,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub vicon: PathBuf,
    /// CSV layout TOML; the default export layout when absent.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub plate: PathBuf,
    #[arg(long)]
    pub object: Option<String>,
    /// Camera frames to extract; as many as the stream holds when absent.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub factor: usize,
    #[arg(long, default_value_t = 0)]
    pub offset: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Pose sequence JSON, alignment output, or registration output.
    #[arg(long)]
    pub est: PathBuf,
    /// Ground truth: motion-capture CSV or pose JSON.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Required when `--gt` is a CSV.
    #[arg(long)]
    pub plate: Option<PathBuf>,
    #[arg(long)]
    pub object: Option<String>,
    #[arg(long, default_value_t = 8)]
    pub factor: usize,
    #[arg(long, default_value_t = 0)]
    pub offset: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long)]
    pub per_axis: bool,
    /// Second estimate, evaluated alongside and against `--est`.
    #[arg(long)]
    pub diff: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub diff_method: Option<String>,
    #[arg(long)]
    pub sequence: Option<String>,
    /// `.csv` or `.json`; JSON on stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene and trajectory overrides; defaults when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// File paths of a registration run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunPaths {
    pub cloud0: Option<PathBuf>,
    pub cloud_x: Option<PathBuf>,
    pub calib0: Option<PathBuf>,
    pub calib_x: Option<PathBuf>,
    pub image_features: Option<PathBuf>,
    pub intrinsics: Option<PathBuf>,
    pub intrinsics0: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ransac3d,
    Pnp,
}

/// Registration run configuration. Relative paths resolve against the
/// directory of the file they were read from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Option<Method>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub paths: RunPaths,
    pub ransac3d: Option<Ransac3dParams>,
    pub pnp: Option<PnpParams>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::from_toml(&read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for slot in [
            &mut p.cloud0,
            &mut p.cloud_x,
            &mut p.calib0,
            &mut p.calib_x,
            &mut p.image_features,
            &mut p.intrinsics,
            &mut p.intrinsics0,
            &mut cfg.out,
        ] {
            if let Some(rel) = slot.take() {
                *slot = Some(base.join(rel));
            }
        }
        Ok(cfg)
    }

    /// Checks that the method's inputs are present and exist.
    pub fn validate(&self, method: Method) -> Result<()> {
        if let Some(m) = self.method {
            if m != method {
                return Err(Error::Config(format!("config is for method {m:?}, not {method:?}")));
            }
        }
        let p = &self.paths;
        let required: Vec<(&str, &Option<PathBuf>)> = match method {
            Method::Ransac3d => vec![
                ("cloud0", &p.cloud0),
                ("cloudX", &p.cloud_x),
                ("calib0", &p.calib0),
                ("calibX", &p.calib_x),
            ],
            Method::Pnp => vec![
                ("image-features", &p.image_features),
                ("cloud0", &p.cloud0),
                ("intrinsics", &p.intrinsics),
                ("calib0", &p.calib0),
            ],
        };
        for (name, path) in required {
            match path {
                None => return Err(Error::Config(format!("missing --{name}"))),
                Some(path) => require_file(path)?,
            }
        }
        if method == Method::Pnp {
            if let Some(path) = &p.intrinsics0 {
                require_file(path)?;
            }
        }
        Ok(())
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{}: file not found", path.display())))
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_pose(path: &Path) -> Result<Pose> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("output serializes");
    out.push(b'\n');
    out
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_config() {
        2
    } else {
        1
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::ParseMla(a) => {
            echo_seed(cli.seed.unwrap_or(0));
            cmd_parse_mla(a)
        }
        Command::Register(RegisterCommand::Ransac3d(a)) => cmd_register_ransac3d(a, cli.seed),
        Command::Register(RegisterCommand::Pnp(a)) => cmd_register_pnp(a, cli.seed),
        Command::Align(a) => {
            echo_seed(cli.seed.unwrap_or(0));
            cmd_align(a)
        }
        Command::Evaluate(a) => {
            echo_seed(cli.seed.unwrap_or(0));
            cmd_evaluate(a)
        }
        Command::Synth(a) => cmd_synth(a, cli.seed),
    }
}

fn echo_seed(seed: u64) {
    eprintln!("seed: {seed}");
}

pub fn cmd_parse_mla(args: &ParseMlaArgs) -> Result<()> {
    let parsed = parse_mla_xml(&read_bytes(&args.file)?)?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let out = if args.json { to_json(&parsed) } else { parsed.calibration.to_xml().into_bytes() };
    write_output(args.out.as_deref(), &out)
}

fn load_run_config(common: &CommonRegisterArgs) -> Result<RunConfig> {
    match &common.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    }
}

fn override_path(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if let Some(p) = flag {
        *slot = Some(p.clone());
    }
}

fn apply_overrides(params: &mut Ransac3dParams, common: &CommonRegisterArgs) {
    if let Some(v) = common.threshold {
        params.inlier_threshold = v;
    }
    if let Some(v) = common.max_iterations {
        params.max_iterations = v;
    }
    if let Some(v) = common.min_inliers {
        params.min_inliers = v;
    }
    if let Some(v) = common.confidence {
        params.confidence = v;
    }
    if common.parallel {
        params.parallel = true;
    }
}

fn resolve_seed(flag: Option<u64>, config: Option<u64>, params: u64) -> u64 {
    flag.or(config).unwrap_or(params)
}

pub fn cmd_register_ransac3d(args: &Ransac3dArgs, seed_flag: Option<u64>) -> Result<()> {
    let mut cfg = load_run_config(&args.common)?;
    override_path(&mut cfg.paths.cloud0, &args.cloud0);
    override_path(&mut cfg.paths.cloud_x, &args.cloud_x);
    override_path(&mut cfg.paths.calib0, &args.calib0);
    override_path(&mut cfg.paths.calib_x, &args.calib_x);
    override_path(&mut cfg.out, &args.common.out);
    cfg.validate(Method::Ransac3d)?;

    let mut params = match &args.common.params {
        Some(path) => toml::from_str(&read_text(path)?)?,
        None => cfg.ransac3d.clone().unwrap_or_default(),
    };
    apply_overrides(&mut params, &args.common);
    params.seed = resolve_seed(seed_flag, cfg.seed, params.seed);
    echo_seed(params.seed);
    params.validate()?;

    let p = &cfg.paths;
    let calib0 = read_pose(p.calib0.as_deref().expect("validated"))?;
    let calib_x = read_pose(p.calib_x.as_deref().expect("validated"))?;
    let cloud0 = read_sidecar(p.cloud0.as_deref().expect("validated"))?.into_cloud(calib0.child().clone())?;
    let cloud_x = read_sidecar(p.cloud_x.as_deref().expect("validated"))?.into_cloud(calib_x.child().clone())?;

    let reg = register_ransac3d(&cloud0, &cloud_x, &params).map_err(|e| e.at(Stage::Ransac3d))?;
    let extrinsic = chain_extrinsic_ransac(&calib_x, &reg.pose, &calib0).map_err(|e| e.at(Stage::Chain))?;
    let calib0_inv = calib0.inverse();
    eprintln!(
        "ransac3d: {} inliers of {} matches, rms {:.4} mm",
        reg.inlier_indices.len(),
        reg.correspondences.len(),
        reg.rms_residual
    );
    let out = json!({
        "method": "ransac3d",
        "seed": params.seed,
        "params": params,
        "extrinsic": extrinsic,
        "chain": {
            "order": describe_chain(&[&calib_x, &reg.pose, &calib0_inv]),
            "calib_x": calib_x,
            "cloud_alignment": reg.pose,
            "calib0": calib0,
        },
        "registration": reg,
    });
    write_output(cfg.out.as_deref(), &to_json(&out))
}

pub fn cmd_register_pnp(args: &PnpArgs, seed_flag: Option<u64>) -> Result<()> {
    let mut cfg = load_run_config(&args.common)?;
    override_path(&mut cfg.paths.image_features, &args.image_features);
    override_path(&mut cfg.paths.cloud0, &args.cloud0);
    override_path(&mut cfg.paths.intrinsics, &args.intrinsics);
    override_path(&mut cfg.paths.calib0, &args.calib0);
    override_path(&mut cfg.paths.intrinsics0, &args.intrinsics0);
    override_path(&mut cfg.out, &args.common.out);
    cfg.validate(Method::Pnp)?;

    let mut params: PnpParams = match &args.common.params {
        Some(path) => toml::from_str(&read_text(path)?)?,
        None => cfg.pnp.clone().unwrap_or_default(),
    };
    apply_overrides(&mut params.ransac, &args.common);
    if let Some(v) = args.fm_threshold {
        params.fm_threshold = v;
    }
    params.ransac.seed = resolve_seed(seed_flag, cfg.seed, params.ransac.seed);
    echo_seed(params.ransac.seed);
    params.validate()?;

    let p = &cfg.paths;
    let camera = CameraModel::from_json(&read_text(p.intrinsics.as_deref().expect("validated"))?)?;
    let camera0 = match &p.intrinsics0 {
        Some(path) => CameraModel::from_json(&read_text(path)?)?,
        None => camera.clone(),
    };
    let calib0 = read_pose(p.calib0.as_deref().expect("validated"))?;
    let image = read_sidecar(p.image_features.as_deref().expect("validated"))?.into_image()?;
    let cloud0 = read_sidecar(p.cloud0.as_deref().expect("validated"))?.into_cloud(calib0.child().clone())?;
    let reference = ReferenceCamera { pose: calib0.clone(), intrinsics: camera0.intrinsics };

    let reg = register_pnp_pipeline(&image, &cloud0, &camera.intrinsics, &camera.distortion, &reference, &params)?;
    let d = &reg.diagnostics;
    eprintln!(
        "pnp: {} matches, {} after F filter, {} inliers, rms {:.4} px",
        d.matches, d.pnp_candidates, d.pnp_inliers, d.lm_final_rms_px
    );
    if !d.lm_converged {
        eprintln!("warning: refinement stopped after {} iterations without converging", d.lm_iterations);
    }
    let calib0_inv = calib0.inverse();
    let out = json!({
        "method": "pnp",
        "seed": params.ransac.seed,
        "params": params,
        "extrinsic": reg.result.pose,
        "chain": {
            "order": describe_chain(&[&reg.camera_pose, &calib0_inv]),
            "camera_pose": reg.camera_pose,
            "calib0": calib0,
        },
        "registration": reg.result,
        "diagnostics": reg.diagnostics,
    });
    write_output(cfg.out.as_deref(), &to_json(&out))
}

fn read_schema(path: Option<&Path>) -> Result<ViconSchema> {
    match path {
        Some(path) => ViconSchema::from_toml(&read_text(path)?),
        None => Ok(ViconSchema::default()),
    }
}

struct AlignInput<'a> {
    vicon: &'a Path,
    schema: Option<&'a Path>,
    plate: &'a Path,
    object: Option<&'a str>,
    frames: Option<usize>,
    factor: usize,
    offset: usize,
}

fn align(input: &AlignInput<'_>) -> Result<(String, Vec<Option<Pose>>)> {
    let schema = read_schema(input.schema)?;
    let data = parse_vicon_csv(&read_bytes(input.vicon)?, &schema)?;
    let object = match input.object {
        Some(o) => o.to_string(),
        None => match data.objects().as_slice() {
            [only] => only.to_string(),
            many => {
                return Err(Error::Config(format!("--object required, file has {}", many.join(", "))));
            }
        },
    };
    let stream = data.stream(&object)?;
    if input.factor == 0 {
        return Err(Error::InvalidParameter("factor must be >= 1".into()));
    }
    let available = stream.samples.len().saturating_sub(input.offset).div_ceil(input.factor);
    let frames = input.frames.unwrap_or(available);
    let marker_plate = MarkerPlate::from_json(&read_text(input.plate)?)?;
    let plate = plate_frame(&marker_plate)?;
    let offset = marker_plate.aruco_to_vicon_offset;
    let poses = sync_frames(stream, frames, input.factor, input.offset)?
        .into_iter()
        .map(|p| p.map(|p| to_common_frame(&p, &plate, &offset)).transpose())
        .collect::<Result<Vec<_>>>()?;
    Ok((object, poses))
}

pub fn cmd_align(args: &AlignArgs) -> Result<()> {
    let (object, poses) = align(&AlignInput {
        vicon: &args.vicon,
        schema: args.schema.as_deref(),
        plate: &args.plate,
        object: args.object.as_deref(),
        frames: args.frames,
        factor: args.factor,
        offset: args.offset,
    })?;
    let gaps = poses.iter().filter(|p| p.is_none()).count();
    eprintln!("align: {} frames of `{object}`, {gaps} gaps", poses.len());
    let out = json!({ "object": object, "factor": args.factor, "offset": args.offset, "poses": poses });
    write_output(args.out.as_deref(), &to_json(&out))
}

/// Pose sequence from any of: an array of poses and nulls, an object with a
/// `poses` array, or an object with a single `extrinsic` pose.
pub fn poses_from_json(value: &Value) -> Result<Vec<Option<Pose>>> {
    match value {
        Value::Array(items) => items
            .iter()
            .map(|v| if v.is_null() { Ok(None) } else { Ok(Some(Pose::deserialize(v)?)) })
            .collect(),
        Value::Object(map) => {
            if let Some(poses) = map.get("poses") {
                poses_from_json(poses)
            } else if let Some(pose) = map.get("extrinsic") {
                Ok(vec![Some(Pose::deserialize(pose)?)])
            } else {
                Err(Error::Config("expected a pose array, `poses` or `extrinsic`".into()))
            }
        }
        _ => Err(Error::Config("expected a pose array, `poses` or `extrinsic`".into())),
    }
}

fn read_poses(path: &Path) -> Result<Vec<Option<Pose>>> {
    let value: Value = serde_json::from_str(&read_text(path)?)?;
    poses_from_json(&value)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "est".into())
}

fn method_report(
    name: String,
    est: &[Option<Pose>],
    gt: &[Option<Pose>],
    stride: usize,
    per_axis: bool,
) -> Result<MethodReport> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch { left: est.len(), right: gt.len() });
    }
    Ok(MethodReport {
        method: name,
        relative: if est.len() > stride { Some(relative_errors(est, gt, stride)?) } else { None },
        absolute: Some(absolute_errors(est, gt)?),
        per_axis: if per_axis { Some(per_axis_errors(est, gt)?) } else { None },
    })
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let est = read_poses(&args.est)?;
    let is_csv = args.gt.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let gt = if is_csv {
        let plate = args.plate.as_deref().ok_or_else(|| Error::Config("--plate required with a CSV --gt".into()))?;
        align(&AlignInput {
            vicon: &args.gt,
            schema: args.schema.as_deref(),
            plate,
            object: args.object.as_deref(),
            frames: Some(est.len()),
            factor: args.factor,
            offset: args.offset,
        })?
        .1
    } else {
        read_poses(&args.gt)?
    };

    let mut methods = vec![method_report(
        args.method.clone().unwrap_or_else(|| stem(&args.est)),
        &est,
        &gt,
        args.stride,
        args.per_axis,
    )?];
    let mut difference = None;
    if let Some(path) = &args.diff {
        let est_b = read_poses(path)?;
        let name = args.diff_method.clone().unwrap_or_else(|| stem(path));
        methods.push(method_report(name, &est_b, &gt, args.stride, args.per_axis)?);
        difference = Some(method_difference(&est, &est_b)?);
    }
    let report = EvalReport {
        sequences: vec![SequenceReport {
            sequence: args.sequence.clone().unwrap_or_else(|| stem(&args.gt)),
            methods,
            difference,
        }],
    };
    for m in &report.sequences[0].methods {
        if let Some(a) = &m.absolute {
            eprintln!(
                "{}: absolute {:.4} mm / {:.5} deg RMSE over {} frames",
                m.method, a.translation.rmse, a.rotation.rmse, a.translation.n
            );
        }
    }
    let format = args.out.as_deref().map_or(ReportFormat::Json, ReportFormat::from_path);
    write_output(args.out.as_deref(), &emit_report(&report, format))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneOverrides {
    pub n_points: Option<usize>,
    pub noise_px: Option<f64>,
    pub noise_3d: Option<f64>,
    pub outlier_fraction: Option<f64>,
    pub descriptor_dim: Option<usize>,
    pub keypoint_space: Option<KeypointSpace>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryOverrides {
    pub n_frames: Option<usize>,
    pub factor: Option<usize>,
    pub object: Option<String>,
    pub motion: Option<MotionModel>,
}

/// `synth --spec` file contents.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: Option<u64>,
    pub scene: SceneOverrides,
    pub trajectory: TrajectoryOverrides,
}

impl SynthConfig {
    pub fn scene_spec(&self, seed: u64) -> SceneSpec {
        let mut spec = SceneSpec::seeded(seed);
        let s = &self.scene;
        spec.n_points = s.n_points.unwrap_or(spec.n_points);
        spec.noise_px = s.noise_px.unwrap_or(spec.noise_px);
        spec.noise_3d = s.noise_3d.unwrap_or(spec.noise_3d);
        spec.outlier_fraction = s.outlier_fraction.unwrap_or(spec.outlier_fraction);
        spec.descriptor_dim = s.descriptor_dim.unwrap_or(spec.descriptor_dim);
        spec.keypoint_space = s.keypoint_space.unwrap_or(spec.keypoint_space);
        spec
    }

    pub fn trajectory_spec(&self, seed: u64) -> TrajectorySpec {
        let t = &self.trajectory;
        let mut spec = TrajectorySpec::seeded(seed, t.n_frames.unwrap_or(20));
        spec.factor = t.factor.unwrap_or(spec.factor);
        spec.object = t.object.clone().unwrap_or(spec.object);
        spec.motion = t.motion.unwrap_or(spec.motion);
        spec
    }
}

pub fn cmd_synth(args: &SynthArgs, seed_flag: Option<u64>) -> Result<()> {
    let cfg = match &args.spec {
        Some(path) => toml::from_str::<SynthConfig>(&read_text(path)?)?,
        None => SynthConfig::default(),
    };
    let seed = resolve_seed(seed_flag, cfg.seed, 0);
    echo_seed(seed);
    let scene = generate_scene(&cfg.scene_spec(seed))?;
    let trajectory = generate_trajectory(&cfg.trajectory_spec(seed))?;

    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let put = |name: &str, bytes: &[u8]| write_output(Some(&dir.join(name)), bytes);
    put("cloud0.lfmf", &encode_cloud(&scene.cloud0))?;
    put("cloudX.lfmf", &encode_cloud(&scene.cloud_x))?;
    put("imageX.lfmf", &encode_image(&scene.image))?;
    put("intrinsics.json", &to_json(&scene.spec.camera))?;
    put("calib0.json", &to_json(scene.calib0()))?;
    put("calibX.json", &to_json(&scene.calib_x()))?;
    put("vicon.csv", &trajectory.vicon_csv)?;
    put(
        "schema.toml",
        toml::to_string(&trajectory.spec.schema).map_err(|e| Error::Config(e.to_string()))?.as_bytes(),
    )?;
    put("plate.json", &to_json(&trajectory.spec.plate))?;
    put("trajectory_gt.json", &to_json(&json!({ "object": trajectory.spec.object, "poses": trajectory.poses })))?;
    let inliers = scene.inlier.iter().filter(|&&b| b).count();
    put(
        "truth.json",
        &to_json(&json!({
            "seed": seed,
            "extrinsic": scene.extrinsic(),
            "pose0": scene.spec.pose0,
            "pose_x": scene.spec.pose_x,
            "world_x": scene.spec.world_x,
            "inliers": inliers,
            "scene": scene.spec,
            "trajectory": trajectory.spec,
        })),
    )?;
    let run = RunConfig {
        method: None,
        seed: Some(seed),
        out: None,
        paths: RunPaths {
            cloud0: Some("cloud0.lfmf".into()),
            cloud_x: Some("cloudX.lfmf".into()),
            calib0: Some("calib0.json".into()),
            calib_x: Some("calibX.json".into()),
            image_features: Some("imageX.lfmf".into()),
            intrinsics: Some("intrinsics.json".into()),
            intrinsics0: None,
        },
        ransac3d: None,
        pnp: None,
    };
    put("run.toml", toml::to_string(&run).map_err(|e| Error::Config(e.to_string()))?.as_bytes())?;
    eprintln!(
        "synth: {} points ({inliers} inliers), {} trajectory frames in {}",
        scene.spec.n_points,
        trajectory.poses.len(),
        dir.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(3), Some(4), 5), 3);
        assert_eq!(resolve_seed(None, Some(4), 5), 4);
        assert_eq!(resolve_seed(None, None, 5), 5);
    }

    #[test]
    fn run_config_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 9\n[paths]\ncloud0 = \"c0.lfmf\"\n[ransac3d]\ninlier_threshold = 4.0\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.paths.cloud0, Some(dir.path().join("c0.lfmf")));
        assert_eq!(cfg.ransac3d.unwrap().inlier_threshold, 4.0);
    }

    #[test]
    fn validate_reports_missing_files_as_config_errors() {
        let cfg = RunConfig {
            paths: RunPaths {
                cloud0: Some("/nonexistent/c0".into()),
                cloud_x: Some("/nonexistent/cx".into()),
                calib0: Some("/nonexistent/k0".into()),
                calib_x: Some("/nonexistent/kx".into()),
                ..Default::default()
            },
            ..Default::default()
        };
        let err = cfg.validate(Method::Ransac3d).unwrap_err();
        assert_eq!(exit_code(&err), 2);
        let err = RunConfig::default().validate(Method::Pnp).unwrap_err();
        assert!(err.to_string().contains("--image-features"));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
        assert!(toml::from_str::<SynthConfig>("[scene]\nnoise = 1.0\n").is_err());
    }

    #[test]
    fn pose_sequences_accept_all_shapes() {
        let p = Pose::identity(crate::se3::frame("A"), crate::se3::frame("B"));
        let pv = serde_json::to_value(&p).unwrap();
        assert_eq!(poses_from_json(&json!([pv, null])).unwrap(), vec![Some(p.clone()), None]);
        assert_eq!(poses_from_json(&json!({ "poses": [pv] })).unwrap(), vec![Some(p.clone())]);
        assert_eq!(poses_from_json(&json!({ "extrinsic": pv })).unwrap(), vec![Some(p)]);
        assert!(poses_from_json(&json!(3)).is_err());
    }

    #[test]
    fn algorithmic_errors_exit_with_one() {
        let e = Error::NoConsensus { inliers: 2, required: 10 }.at(Stage::Ransac3d);
        assert_eq!(exit_code(&e), 1);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
    }
}
