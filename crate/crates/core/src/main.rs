use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use contourkit::annotate::{apply_stroke, BrushMode, BrushStroke, ContourSet, LabelVolume};
use contourkit::geom::{Pose, Vec3};
use contourkit::interp::interpolate_slices;
use contourkit::metrics::{attention_series_with, dsc, summarize, EventKind, SessionRecord};
use contourkit::phantom::{cube_volume, Phantom};
use contourkit::render::{
    decode_png, encode_png_rgba, render_image, slice_rgba, Camera, RenderSettings, Rgba, TransferFunction,
};
use contourkit::service::{serve, ServiceConfig};
use contourkit::store::{
    load_project, mask_hash, replay_prefix, save_mask, save_metadata, save_project, Project, REFERENCE_MASK,
    USER_MASK,
};
use contourkit::volume::{normalize_minmax, read_volume, write_volume, Axis, DensityWindow, Volume};
use contourkit::workflow::{run_workflow, Condition, WorkflowOptions};

/// Voxel contouring toolkit.
#[derive(Parser)]
#[command(name = "contourkit", version, about)]
struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a normalized volume from a PNG slice stack or a raw file.
    Import(ImportArgs),
    /// Create a project directory around a volume.
    Init(InitArgs),
    /// Direct volume rendering to PNG.
    Render(RenderArgs),
    /// Windowed slice with mask overlay to PNG.
    Slice(SliceArgs),
    /// Apply a stroke script (JSON array of strokes) to a mask.
    Paint(PaintArgs),
    /// Fill slices between key slices.
    Interp(InterpArgs),
    /// Dice similarity of two mask files.
    Score(ScoreArgs),
    /// Attention-over-progress CSV from a session log.
    Gaze(GazeArgs),
    /// Timing, gaze and agreement summary as JSON.
    Metrics(MetricsArgs),
    /// Marching-squares contours of a mask as JSON.
    Contours(ContoursArgs),
    /// Write a synthetic phantom project.
    Phantom(PhantomArgs),
    /// Run a scripted contouring session on a project with a reference mask.
    Workflow(WorkflowArgs),
    /// Rebuild the user mask from a session log.
    Replay(ReplayArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct Target {
    /// Project directory.
    #[arg(long, conflicts_with = "volume")]
    project: Option<PathBuf>,
    /// Volume metadata file (with a sibling `.raw`).
    #[arg(long)]
    volume: Option<PathBuf>,
    /// Mask file; defaults to the project's user mask.
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args)]
struct ImportArgs {
    /// Directory of grayscale PNG slices, stacked in file-name order along z.
    #[arg(long, conflicts_with = "raw")]
    slices: Option<PathBuf>,
    /// Little-endian raw file (x fastest).
    #[arg(long, requires = "dims")]
    raw: Option<PathBuf>,
    #[arg(long, value_parser = parse_dims)]
    dims: Option<[usize; 3]>,
    #[arg(long, value_enum, default_value = "u16")]
    dtype: RawType,
    /// Voxel spacing in mm, `sx,sy,sz`.
    #[arg(long, value_parser = parse_vec3, default_value = "1,1,1")]
    spacing: [f64; 3],
    /// Output volume metadata path; the payload goes next to it as `.raw`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RawType {
    U8,
    U16,
    F32,
}

#[derive(Args)]
struct InitArgs {
    #[arg(long)]
    volume: PathBuf,
    /// Reference mask stored as `reference`.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long)]
    tf: Option<PathBuf>,
    #[arg(long)]
    window: Option<DensityWindow>,
    /// `px,py,pz,tx,ty,tz,ux,uy,uz,W,H,worldWidth`; overrides the orbit flags.
    #[arg(long)]
    cam: Option<Camera>,
    #[arg(long, default_value_t = 30.0, allow_hyphen_values = true)]
    az: f64,
    #[arg(long, default_value_t = 25.0, allow_hyphen_values = true)]
    el: f64,
    /// Image size `WxH`.
    #[arg(long, value_parser = parse_size, default_value = "256x256")]
    size: (usize, usize),
    #[arg(long)]
    world_width: Option<f64>,
    #[arg(long, default_value_t = 256)]
    steps: usize,
    /// Composite every sample (no early ray termination).
    #[arg(long)]
    unterminated: bool,
    /// Skip the label tint.
    #[arg(long)]
    no_labels: bool,
    /// Pose JSON file.
    #[arg(long)]
    pose: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SliceArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long)]
    axis: Axis,
    #[arg(long)]
    index: usize,
    #[arg(long)]
    window: Option<DensityWindow>,
    #[arg(long)]
    tint: Option<Rgba>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PaintArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long)]
    script: PathBuf,
    /// Output mask; defaults to `--mask` (in place) or the project.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InterpArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long)]
    axis: Axis,
    #[arg(long, value_delimiter = ',', required = true)]
    keys: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    a: PathBuf,
    b: PathBuf,
}

#[derive(Args)]
struct GazeArgs {
    #[arg(long)]
    session: PathBuf,
    /// Saccade threshold in degrees per second.
    #[arg(long, default_value_t = 150.0)]
    threshold: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long, conflicts_with = "session")]
    project: Option<PathBuf>,
    #[arg(long)]
    session: Option<PathBuf>,
    #[arg(long, requires = "reference")]
    mask: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct ContoursArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long, default_value = "z")]
    axis: Axis,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhantomKind {
    Ellipsoid,
    Sphere,
    Cube,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long, value_enum, default_value = "ellipsoid")]
    kind: PhantomKind,
    #[arg(long, value_parser = parse_dims)]
    dims: Option<[usize; 3]>,
    #[arg(long, value_parser = parse_vec3)]
    spacing: Option<[f64; 3]>,
    /// Ellipsoid radii in mm.
    #[arg(long, value_parser = parse_vec3)]
    radii: Option<[f64; 3]>,
    /// Sphere radius or cube half-width in mm.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct WorkflowArgs {
    #[arg(long)]
    project: PathBuf,
    #[arg(long)]
    condition: Condition,
    #[arg(long, default_value_t = 4)]
    key_step: usize,
    #[arg(long, default_value = "z")]
    axis: Axis,
    /// Also write the recorded strokes as a stroke script.
    #[arg(long)]
    emit_script: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    project: PathBuf,
    /// Session log; defaults to the project's.
    #[arg(long)]
    session: Option<PathBuf>,
    /// Replay only the first N events.
    #[arg(long)]
    prefix: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// JSON config `{"port":..,"dataDir":..}`; PORT and DATA_DIR override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr, const N: usize>(s: &str) -> Result<[T; N], String>
where
    T::Err: std::fmt::Display,
{
    let v: Vec<T> = s.split(',').map(|p| p.trim().parse::<T>().map_err(|e| format!("`{p}`: {e}"))).collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected {N} comma-separated values"))
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let d: [usize; 3] = parse_list(s)?;
    if d.contains(&0) {
        return Err("dims must be positive".into());
    }
    Ok(d)
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    parse_list(s)
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("size must look like WxH")?;
    let w: usize = w.parse().map_err(|e| format!("width: {e}"))?;
    let h: usize = h.parse().map_err(|e| format!("height: {e}"))?;
    if w == 0 || h == 0 {
        return Err("size must be positive".into());
    }
    Ok((w, h))
}

/// Resolved input: a project (loaded or transient) and where it came from.
struct Workspace {
    dir: Option<PathBuf>,
    mask_path: Option<PathBuf>,
    project: Project,
}

impl Workspace {
    fn open(t: &Target) -> anyhow::Result<Self> {
        let (dir, mut project) = match (&t.project, &t.volume) {
            (Some(dir), _) => (Some(dir.clone()), load_project(dir)?),
            (None, Some(v)) => (None, Project::new("cli", read_volume(v)?)),
            (None, None) => bail!("either --project or --volume is required"),
        };
        if let Some(path) = &t.mask {
            if path.exists() {
                let m = LabelVolume::load(path)?;
                m.check_dims(project.volume.dims())?;
                project.masks.insert(USER_MASK.into(), m);
            }
        }
        Ok(Workspace { dir, mask_path: t.mask.clone(), project })
    }

    fn mask(&self) -> LabelVolume {
        self.project.user_mask().cloned().unwrap_or_else(|| LabelVolume::for_volume(&self.project.volume))
    }

    /// Writes the user mask to `out`, `--mask`, or back into the project.
    fn save_mask(&self, out: Option<&Path>) -> anyhow::Result<String> {
        let m = self.mask();
        let target = out.map(Path::to_path_buf).or_else(|| self.mask_path.clone());
        match (target, &self.dir) {
            (Some(path), _) => {
                m.save(&path)?;
                Ok(path.display().to_string())
            }
            (None, Some(dir)) => {
                save_mask(dir, USER_MASK, &m)?;
                self.project.session.save(dir.join("session.jsonl"))?;
                save_metadata(dir, &self.project)?;
                Ok(dir.display().to_string())
            }
            (None, None) => bail!("no output: pass --out or --mask"),
        }
    }
}

fn print(json_mode: bool, value: serde_json::Value, text: impl FnOnce() -> String) {
    if json_mode {
        println!("{value}");
    } else {
        println!("{}", text());
    }
}

fn import(a: &ImportArgs) -> anyhow::Result<Volume> {
    if let Some(dir) = &a.slices {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        files.sort();
        if files.is_empty() {
            bail!("no PNG slices in {}", dir.display());
        }
        let mut raw: Vec<u16> = Vec::new();
        let mut size = None;
        for f in &files {
            let img = decode_png(&fs::read(f).with_context(|| format!("reading {}", f.display()))?)
                .with_context(|| f.display().to_string())?;
            if img.channels > 2 {
                bail!("{}: slices must be grayscale", f.display());
            }
            match size {
                None => size = Some((img.width, img.height)),
                Some(s) if s != (img.width, img.height) => bail!(
                    "{}: slice is {}x{}, expected {}x{}",
                    f.display(),
                    img.width,
                    img.height,
                    s.0,
                    s.1
                ),
                _ => {}
            }
            for y in 0..img.height {
                for x in 0..img.width {
                    raw.push(img.luma(x, y) as u16);
                }
            }
        }
        let (w, h) = size.expect("at least one slice");
        return Ok(normalize_minmax(&raw, [w, h, files.len()], a.spacing)?);
    }
    let Some(path) = &a.raw else { bail!("either --slices or --raw is required") };
    let dims = a.dims.expect("clap enforces --dims with --raw");
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let n: usize = dims.iter().product();
    let width = match a.dtype {
        RawType::U8 => 1,
        RawType::U16 => 2,
        RawType::F32 => 4,
    };
    if bytes.len() != n * width {
        bail!("{}: expected {} bytes for dims {dims:?}, found {}", path.display(), n * width, bytes.len());
    }
    Ok(match a.dtype {
        RawType::U8 => normalize_minmax(&bytes, dims, a.spacing)?,
        RawType::U16 => {
            let v: Vec<u16> = bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
            normalize_minmax(&v, dims, a.spacing)?
        }
        RawType::F32 => {
            let v: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            if v.iter().any(|x| !x.is_finite()) {
                bail!("{}: non-finite values", path.display());
            }
            normalize_minmax(&v, dims, a.spacing)?
        }
    })
}

fn read_script(path: &Path) -> anyhow::Result<Vec<BrushStroke>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: invalid stroke script", path.display()))
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let js = cli.json;
    match cli.cmd {
        Cmd::Import(a) => {
            let v = import(&a)?;
            write_volume(&a.out, &v)?;
            let (lo, hi) = v.raw_range();
            print(js, json!({"dims": v.dims(), "spacingMm": v.spacing(), "rawRange": [lo, hi]}), || {
                let [x, y, z] = v.dims();
                let [sx, sy, sz] = v.spacing();
                format!("dims {x}x{y}x{z}  spacing {sx},{sy},{sz} mm  rawRange [{lo}, {hi}]")
            });
        }
        Cmd::Init(a) => {
            let volume = read_volume(&a.volume)?;
            let id = a.id.clone().unwrap_or_else(|| dir_name(&a.out));
            let mut p = Project::new(id, volume);
            if let Some(r) = &a.reference {
                let m = LabelVolume::load(r)?;
                m.check_dims(p.volume.dims())?;
                p = p.with_reference(m);
            }
            save_project(&a.out, &p)?;
            print(js, json!({"id": p.id, "dir": a.out}), || format!("created project {} in {}", p.id, a.out.display()));
        }
        Cmd::Render(a) => {
            let ws = Workspace::open(&a.target)?;
            let p = &ws.project;
            let tf = match &a.tf {
                Some(path) => TransferFunction::load(path)?,
                None => p.transfer_function.clone(),
            };
            let pose = match &a.pose {
                Some(path) => serde_json::from_str::<Pose>(&fs::read_to_string(path)?)
                    .with_context(|| format!("{}: invalid pose", path.display()))?,
                None => p.pose,
            };
            let camera = match a.cam {
                Some(c) => c,
                None => Camera::framing(
                    Vec3::from(p.volume.center_mm()),
                    p.volume.extent_mm(),
                    a.az,
                    a.el,
                    a.size,
                    a.world_width,
                )?,
            };
            if a.steps == 0 {
                bail!("--steps must be positive");
            }
            let settings = RenderSettings {
                steps: a.steps,
                early_termination: if a.unterminated { None } else { RenderSettings::default().early_termination },
                pose,
                ..Default::default()
            };
            let labels = if a.no_labels { None } else { p.user_mask() };
            let window = a.window.unwrap_or(p.window);
            let render = || render_image(&p.volume, labels, &tf, window, &camera, settings);
            let frame = match a.threads {
                Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(render)?,
                None => render()?,
            };
            fs::write(&a.out, frame.to_png()?).with_context(|| format!("writing {}", a.out.display()))?;
            print(js, json!({"out": a.out, "width": frame.width, "height": frame.height}), || {
                format!("wrote {}x{} render to {}", frame.width, frame.height, a.out.display())
            });
        }
        Cmd::Slice(a) => {
            let ws = Workspace::open(&a.target)?;
            let p = &ws.project;
            let slice = p.volume.extract_slice(a.axis, a.index)?;
            let mask = ws.mask().mask_slice(a.axis, a.index)?;
            let tint = a.tint.unwrap_or(RenderSettings::default().label_tint);
            let rgba = slice_rgba(&slice, Some(&mask), a.window.unwrap_or(p.window), tint);
            fs::write(&a.out, encode_png_rgba(slice.width, slice.height, &rgba)?)?;
            print(js, json!({"out": a.out, "width": slice.width, "height": slice.height}), || {
                format!("wrote {}x{} slice to {}", slice.width, slice.height, a.out.display())
            });
        }
        Cmd::Paint(a) => {
            let mut ws = Workspace::open(&a.target)?;
            let strokes = read_script(&a.script)?;
            let volume = ws.project.volume.clone();
            let logging = ws.dir.is_some() && a.out.is_none() && ws.mask_path.is_none();
            for s in &strokes {
                apply_stroke(ws.project.user_mask_mut(), &volume, s)?;
                if logging {
                    let t = ws.project.session.events.last().map_or(0.0, |e| e.t).max(s.timestamp);
                    ws.project.session.push(t, EventKind::StrokeStart);
                    ws.project.session.push(t, EventKind::StrokeEnd { stroke: Some(s.clone()) });
                }
            }
            let dest = ws.save_mask(a.out.as_deref())?;
            let m = ws.mask();
            print(js, json!({"strokes": strokes.len(), "voxels": m.count(), "hash": mask_hash(&m), "out": dest}), || {
                format!("applied {} strokes; {} voxels set; wrote {dest}", strokes.len(), m.count())
            });
        }
        Cmd::Interp(a) => {
            let mut ws = Workspace::open(&a.target)?;
            let volume = ws.project.volume.clone();
            interpolate_slices(ws.project.user_mask_mut(), &volume, a.axis, &a.keys)?;
            if ws.dir.is_some() && a.out.is_none() && ws.mask_path.is_none() {
                let t = ws.project.session.events.last().map_or(0.0, |e| e.t);
                ws.project.session.push(t, EventKind::Interp { axis: a.axis, keys: a.keys.clone() });
            }
            let dest = ws.save_mask(a.out.as_deref())?;
            let m = ws.mask();
            print(js, json!({"voxels": m.count(), "hash": mask_hash(&m), "out": dest}), || {
                format!("interpolated {} keys along {}; {} voxels set; wrote {dest}", a.keys.len(), a.axis, m.count())
            });
        }
        Cmd::Score(a) => {
            let x = LabelVolume::load(&a.a)?;
            let y = LabelVolume::load(&a.b)?;
            let d = dsc(&x, &y)?;
            print(js, json!({"dsc": d}), || format!("{d:.4}"));
        }
        Cmd::Gaze(a) => {
            let s = SessionRecord::load(&a.session)?;
            let series = attention_series_with(&s, a.threshold)?;
            if js {
                let text = serde_json::to_string(&series)? + "\n";
                write_or_print(a.out.as_deref(), &text)?;
            } else {
                write_or_print(a.out.as_deref(), &series.to_csv())?;
            }
        }
        Cmd::Metrics(a) => {
            let (session, d) = if let Some(dir) = &a.project {
                let p = load_project(dir)?;
                let d = match (p.user_mask(), p.reference_mask()) {
                    (Some(u), Some(r)) => Some(dsc(u, r)?),
                    _ => None,
                };
                (p.session, d)
            } else {
                let Some(path) = &a.session else { bail!("either --project or --session is required") };
                let d = match (&a.mask, &a.reference) {
                    (Some(m), Some(r)) => Some(dsc(&LabelVolume::load(m)?, &LabelVolume::load(r)?)?),
                    _ => None,
                };
                (SessionRecord::load(path)?, d)
            };
            println!("{}", serde_json::to_string_pretty(&summarize(&session, d)?)?);
        }
        Cmd::Contours(a) => {
            let ws = Workspace::open(&a.target)?;
            let set = ContourSet::extract(&ws.mask(), ws.project.volume.spacing(), a.axis)?;
            let text = serde_json::to_string(&json!({"axis": a.axis, "contours": set.to_records()}))? + "\n";
            write_or_print(a.out.as_deref(), &text)?;
        }
        Cmd::Phantom(a) => {
            let id = dir_name(&a.out);
            let p = match a.kind {
                PhantomKind::Ellipsoid => {
                    let ph = match (a.dims, a.spacing, a.radii) {
                        (None, None, None) => Phantom::standard(),
                        (d, s, r) => Phantom::ellipsoid(
                            d.unwrap_or([48, 48, 40]),
                            s.unwrap_or([1.0, 1.0, 1.5]),
                            r.unwrap_or([14.0, 10.0, 20.0]),
                        )?,
                    };
                    Project::new(id, ph.volume).with_reference(ph.reference)
                }
                PhantomKind::Sphere => {
                    let dims = a.dims.unwrap_or([40; 3]);
                    let spacing = a.spacing.unwrap_or([1.0; 3]);
                    let r = a.radius.unwrap_or(12.0);
                    let ph = Phantom::ellipsoid(dims, spacing, [r; 3])?;
                    let script = vec![BrushStroke::sphere(vec![ph.shape.center], r, BrushMode::Paint)];
                    fs::create_dir_all(&a.out)?;
                    fs::write(a.out.join("script.json"), serde_json::to_string_pretty(&script)?)?;
                    Project::new(id, ph.volume).with_reference(ph.reference)
                }
                PhantomKind::Cube => {
                    let n = a.dims.map_or(32, |d| d[0]);
                    let s = a.spacing.map_or(1.0, |s| s[0]);
                    let half = a.radius.unwrap_or((n - 1) as f64 * s / 4.0);
                    Project::new(id, cube_volume(n, s, half)?)
                }
            };
            save_project(&a.out, &p)?;
            print(js, json!({"id": p.id, "dir": a.out, "dims": p.volume.dims()}), || {
                format!("wrote phantom project {} to {}", p.id, a.out.display())
            });
        }
        Cmd::Workflow(a) => {
            let mut p = load_project(&a.project)?;
            let Some(reference) = p.reference_mask().cloned() else {
                bail!("project has no `{REFERENCE_MASK}` mask to contour against");
            };
            let opts = WorkflowOptions { axis: a.axis, key_step: a.key_step, ..Default::default() };
            let run = run_workflow(a.condition, &p.volume, &reference, &opts)?;
            let d = dsc(&run.mask, &reference)?;
            if let Some(path) = &a.emit_script {
                let strokes: Vec<&BrushStroke> = run
                    .session
                    .events
                    .iter()
                    .filter_map(|e| match &e.kind {
                        EventKind::StrokeEnd { stroke } => stroke.as_ref(),
                        _ => None,
                    })
                    .collect();
                fs::write(path, serde_json::to_string_pretty(&strokes)?)?;
            }
            p.masks.insert(USER_MASK.into(), run.mask.clone());
            p.session = run.session;
            save_mask(&a.project, USER_MASK, &run.mask)?;
            p.session.save(a.project.join("session.jsonl"))?;
            save_metadata(&a.project, &p)?;
            let hash = mask_hash(&run.mask);
            print(
                js,
                json!({"condition": a.condition.to_string(), "dsc": d, "hash": hash, "events": p.session.events.len()}),
                || format!("{}: DSC {d:.4}  events {}  hash {hash}", a.condition, p.session.events.len()),
            );
        }
        Cmd::Replay(a) => {
            let p = load_project(&a.project)?;
            let log = match &a.session {
                Some(path) => SessionRecord::load(path)?,
                None => p.session.clone(),
            };
            let n = a.prefix.unwrap_or(log.events.len()).min(log.events.len());
            let m = replay_prefix(&p, &log, n)?;
            if let Some(out) = &a.out {
                m.save(out)?;
            }
            let hash = mask_hash(&m);
            print(js, json!({"events": n, "voxels": m.count(), "hash": hash}), || {
                format!("replayed {n} events; {} voxels set; hash {hash}", m.count())
            });
        }
        Cmd::Serve(a) => {
            let base = match &a.config {
                Some(path) => ServiceConfig::load(path)?,
                None => ServiceConfig::default(),
            };
            let mut config = base.with_env(|k| std::env::var(k).ok()).map_err(anyhow::Error::msg)?;
            if let Some(port) = a.port {
                config.port = port;
            }
            if let Some(dir) = a.data_dir {
                config.data_dir = dir;
            }
            tracing_subscriber::fmt()
                .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
                .init();
            tokio::runtime::Runtime::new()?.block_on(serve(config))?;
        }
    }
    Ok(())
}

fn dir_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "project".into())
}

/// Error chain joined by `: `, skipping causes already quoted by their parent.
fn error_message(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let json_mode = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = error_message(&e);
            if json_mode {
                println!("{}", json!({"error": msg}));
            }
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
