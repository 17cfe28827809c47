//! Sub-command implementations.

use std::fs;
use std::path::{Path, PathBuf};

use talbot_core::analysis::{
    background_subtract, chirality_metric, estimate_lattice_spacing, gaussian_filter, lattice_sites, ncc, register,
    snr, MaskRole, RegionMask,
};
use talbot_core::grid_field::io::{
    encode_pgm16, read_intensity_pgm, sidecar_path, write_atomic, write_intensity_pgm, write_jones_field,
    write_scalar_field, LoadedImage, Sidecar,
};
use talbot_core::propagation::thin_lens_jones;
use talbot_core::selftest::{run_selftest, SelftestOptions};
use talbot_core::{
    apply_lov_sequence, carpet, gaussian_envelope, intensity, make_grid, project, propagate, propagate_jones,
    strip_phase, thin_lens, Axis, CarpetSpec, IntensityImage, JonesField, LovParams, PropagationPlan, ScalarField,
};

use crate::config::{Element, Envelope, Purpose, RunConfig};
use crate::error::{AtPath, CliError, CliResult};
use crate::manifest::Manifest;

/// Options shared by every command.
pub struct Context {
    pub out: PathBuf,
    pub seed: u64,
    pub threads: usize,
}

impl Context {
    fn manifest(&self, command: &str) -> Manifest {
        Manifest::new(command, self.seed, self.threads)
    }

    fn prepare_out(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// The analyzed field: a scalar after projection or both circular
/// components when no analyzer is set.
enum Beam {
    Scalar(ScalarField),
    Jones(JonesField),
}

impl Beam {
    fn propagate(&self, z: f64, plan: &PropagationPlan) -> CliResult<Beam> {
        Ok(match self {
            Beam::Scalar(f) => Beam::Scalar(propagate(f, z, plan)?),
            Beam::Jones(f) => Beam::Jones(propagate_jones(f, z, plan)?),
        })
    }

    fn lens(&self, f: f64) -> CliResult<Beam> {
        Ok(match self {
            Beam::Scalar(s) => Beam::Scalar(thin_lens(s, f)?),
            Beam::Jones(j) => Beam::Jones(thin_lens_jones(j, f)?),
        })
    }

    fn intensity(&self) -> IntensityImage {
        match self {
            Beam::Scalar(f) => intensity(f),
            Beam::Jones(f) => intensity(f),
        }
    }

    fn write_field(&self, path: &Path, z: f64) -> CliResult<()> {
        match self {
            Beam::Scalar(f) => write_scalar_field(path, f, Some(z)).at_path(path)?,
            Beam::Jones(f) => write_jones_field(path, f, Some(z)).at_path(path)?,
        };
        Ok(())
    }
}

/// Source field after the gradient pairs, before the analyzer.
fn source_field(cfg: &RunConfig) -> CliResult<JonesField> {
    let g = cfg.grid.ok_or_else(|| CliError::config("grid", "section missing"))?;
    let s = cfg.source.ok_or_else(|| CliError::config("source", "section missing"))?;
    let grid = make_grid(g.nx, g.ny, g.extent_x, g.extent_y)?;
    let envelope = match s.envelope {
        Envelope::Gaussian { w0 } => gaussian_envelope(&grid, w0, s.wavelength)?,
        Envelope::Constant => ScalarField::constant(grid, s.wavelength, 1.0.into())?,
    };
    let input = JonesField::from_scalar(&envelope, s.polarization.vector());
    if cfg.lov.pairs == 0 {
        return Ok(input);
    }
    let a = cfg.lov.a.ok_or_else(|| CliError::config("lov.a", "missing (needed when lov.n > 0)"))?;
    let params = LovParams::with_origin(a, cfg.lov.pairs, cfg.lov.origin).map_err(|e| CliError::config("lov.a", e.to_string()))?;
    Ok(apply_lov_sequence(&input, &params))
}

/// Source field behind the analyzer, phase-stripped if requested.
fn analyzed_beam(cfg: &RunConfig, field: &JonesField) -> CliResult<Beam> {
    let strip = |f: ScalarField| if cfg.optics.phase_strip { strip_phase(&f) } else { f };
    Ok(match cfg.analyzer {
        Some(p) => Beam::Scalar(strip(project(field, p.vector())?)),
        None => {
            let (r, l) = field.clone().into_components();
            Beam::Jones(JonesField::from_components(strip(r), strip(l))?)
        }
    })
}

fn plan(cfg: &RunConfig, field: &JonesField) -> CliResult<PropagationPlan> {
    PropagationPlan::with_options(*field.grid(), field.wavelength(), cfg.optics.pad_factor, cfg.optics.band_limit)
        .map_err(|e| CliError::config("optics.pad_factor", e.to_string()))
}

fn echo(manifest: &mut Manifest, cfg: &RunConfig) {
    manifest.set_config(cfg.to_ini("config."));
}

pub fn prepare(ctx: &Context, cfg: &RunConfig) -> CliResult<()> {
    cfg.validate_for(Purpose::Prepare)?;
    let mut m = ctx.manifest("prepare");
    echo(&mut m, cfg);
    ctx.prepare_out()?;
    let field = source_field(cfg)?;
    let beam = analyzed_beam(cfg, &field)?;
    m.mark("prepare");
    let path = ctx.path("intensity_z0.pgm");
    write_intensity_pgm(&path, &beam.intensity(), Some(field.wavelength()), Some(0.0)).at_path(&path)?;
    m.output("intensity_z0.pgm");
    m.output("intensity_z0.meta.txt");
    if cfg.output.write_field {
        let path = ctx.path("field_z0.bin");
        write_jones_field(&path, &field, Some(0.0)).at_path(&path)?;
        m.output("field_z0.bin");
        m.output("field_z0.meta.txt");
    }
    m.mark("write");
    m.write(&ctx.out)?;
    println!("prepare: wrote {}", ctx.out.display());
    Ok(())
}

pub fn propagate_planes(ctx: &Context, cfg: &RunConfig) -> CliResult<()> {
    cfg.validate_for(Purpose::Propagate)?;
    let mut m = ctx.manifest("propagate");
    echo(&mut m, cfg);
    ctx.prepare_out()?;
    let field = source_field(cfg)?;
    let beam = analyzed_beam(cfg, &field)?;
    let plan = plan(cfg, &field)?;
    m.mark("prepare");
    for (k, &plane) in cfg.optics.planes.iter().enumerate() {
        let z = plane + cfg.optics.z_offset;
        let mut out = beam.propagate(z, &plan)?;
        let mut z_total = z;
        for e in &cfg.optics.chain {
            out = match *e {
                Element::Lens(f) => out.lens(f)?,
                Element::Propagate(d) => {
                    z_total += d;
                    out.propagate(d, &plan)?
                }
            };
        }
        let name = format!("plane_{k:02}");
        let path = ctx.path(&format!("{name}.pgm"));
        write_intensity_pgm(&path, &out.intensity(), Some(field.wavelength()), Some(z_total)).at_path(&path)?;
        m.output(format!("{name}.pgm"));
        m.output(format!("{name}.meta.txt"));
        if cfg.output.write_field {
            out.write_field(&ctx.path(&format!("{name}_field.bin")), z_total)?;
            m.output(format!("{name}_field.bin"));
            m.output(format!("{name}_field.meta.txt"));
        }
        m.mark(&name);
    }
    m.write(&ctx.out)?;
    println!("propagate: {} planes written to {}", cfg.optics.planes.len(), ctx.out.display());
    Ok(())
}

pub fn carpet_slice(ctx: &Context, cfg: &RunConfig) -> CliResult<()> {
    cfg.validate_for(Purpose::Carpet)?;
    let c = cfg.carpet.ok_or_else(|| CliError::config("carpet", "section missing"))?;
    let mut m = ctx.manifest("carpet");
    echo(&mut m, cfg);
    ctx.prepare_out()?;
    let field = source_field(cfg)?;
    let beam = analyzed_beam(cfg, &field)?;
    let plan = plan(cfg, &field)?;
    let dz = if c.samples > 1 { (c.z_stop - c.z_start) / (c.samples - 1) as f64 } else { 0.0 };
    let z: Vec<f64> = (0..c.samples).map(|k| cfg.optics.z_offset + c.z_start + k as f64 * dz).collect();
    let spec = CarpetSpec::new(c.axis, c.offset, z).map_err(|e| CliError::config("carpet", e.to_string()))?;
    let slice = match &beam {
        Beam::Scalar(f) => carpet(f, &spec, &plan)?,
        Beam::Jones(f) => {
            let mut r = carpet(&f.r_component(), &spec, &plan)?;
            let l = carpet(&f.l_component(), &spec, &plan)?;
            r.rows += &l.rows;
            r
        }
    };
    m.mark("carpet");

    let csv_path = ctx.path("carpet.csv");
    write_atomic(&csv_path, &slice.to_csv().at_path(&csv_path)?).at_path(&csv_path)?;
    m.output("carpet.csv");

    let pgm_path = ctx.path("carpet.pgm");
    let (bytes, scale) = encode_pgm16(&slice.as_image_array());
    write_atomic(&pgm_path, &bytes).at_path(&pgm_path)?;
    let g = field.grid();
    let mut meta = Sidecar {
        pitch_m: Some(match c.axis {
            Axis::X => g.dy(),
            Axis::Y => g.dx(),
        }),
        scale: Some(scale),
        wavelength_m: Some(field.wavelength()),
        ..Default::default()
    };
    meta.extra.insert("axis".into(), c.axis.to_string());
    meta.extra.insert("offset_m".into(), c.offset.to_string());
    meta.extra.insert("z_start_m".into(), (cfg.optics.z_offset + c.z_start).to_string());
    meta.extra.insert("z_step_m".into(), dz.to_string());
    let meta_path = sidecar_path(&pgm_path);
    write_atomic(&meta_path, meta.to_text().as_bytes()).at_path(&meta_path)?;
    m.output("carpet.pgm");
    m.output("carpet.meta.txt");
    m.mark("write");
    m.write(&ctx.out)?;
    println!("carpet: {} rows written to {}", c.samples, ctx.out.display());
    Ok(())
}

/// Metrics for one input image. Failures are kept per metric.
#[derive(Debug, Default)]
struct FieldResult {
    a_hat: Option<f64>,
    a_err: Option<f64>,
    snr_raw: Option<f64>,
    snr_post: Option<f64>,
    chirality: Option<f64>,
    errors: Vec<String>,
}

#[derive(Debug, Default)]
struct PairResult {
    shift: Option<(f64, f64)>,
    ncc: Option<f64>,
    errors: Vec<String>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

fn analyze_field(cfg: &RunConfig, image: &IntensityImage, background: Option<&IntensityImage>, calibrated: bool) -> FieldResult {
    let an = &cfg.analysis;
    let mut r = FieldResult::default();
    if an.spacing {
        match estimate_lattice_spacing(image) {
            Ok(e) => {
                r.a_hat = Some(e.a_hat);
                r.a_err = Some(e.uncertainty);
            }
            Err(e) => r.errors.push(format!("spacing: {e}")),
        }
    }
    if an.snr {
        let result = (|| -> talbot_core::Result<(f64, f64)> {
            let cleaned = match background {
                Some(b) => background_subtract(image, b)?,
                None => image.clone(),
            };
            let post = gaussian_filter(&cleaned, an.sigma)?;
            let signal = RegionMask::above_fraction_of_max(&post, an.signal_fraction)?;
            let frame = RegionMask::border_frame(image.grid(), an.border_fraction)?;
            Ok((snr(image, &signal, &frame)?, snr(&post, &signal, &frame)?))
        })();
        match result {
            Ok((raw, post)) => {
                r.snr_raw = Some(raw);
                r.snr_post = Some(post);
            }
            Err(e) => r.errors.push(format!("snr: {e}")),
        }
    }
    if an.chirality {
        // configured lengths are meters, so they only apply to calibrated images
        let a = if calibrated { cfg.lov.a.or(r.a_hat) } else { r.a_hat };
        match a {
            None => r.errors.push("chirality: no lattice spacing (set lov.a or enable analysis.spacing)".into()),
            Some(a) => {
                let radius = if calibrated { an.chirality_radius.unwrap_or(a / 2.0) } else { a / 2.0 };
                let origin = if calibrated { cfg.lov.origin } else { (0.0, 0.0) };
                let (cx, cy) = image.grid().center();
                // sites default to the central half of the frame, away from the dim edge
                let g = image.grid();
                let range = match (an.site_range, calibrated) {
                    (Some(r), true) => r,
                    _ => 0.5 * g.extent_x().min(g.extent_y()),
                };
                let mut sites = lattice_sites(g, a, origin, radius, 0.0);
                sites.retain(|&(x, y)| (x - cx).abs() <= range / 2.0 && (y - cy).abs() <= range / 2.0);
                match chirality_metric(image, &sites, radius) {
                    Ok(v) => r.chirality = Some(v),
                    Err(e) => r.errors.push(format!("chirality: {e}")),
                }
            }
        }
    }
    r
}

fn analyze_pair(a: &IntensityImage, b: &IntensityImage) -> PairResult {
    let mut r = PairResult::default();
    match register(a, b) {
        Ok(reg) => r.shift = Some((reg.dx, reg.dy)),
        Err(e) => r.errors.push(format!("shift: {e}")),
    }
    match ncc(a, b, &RegionMask::full(a.grid(), MaskRole::Window)) {
        Ok(v) => r.ncc = Some(v),
        Err(e) => r.errors.push(format!("ncc: {e}")),
    }
    r
}

fn load(path: &Path, cfg: &RunConfig) -> CliResult<LoadedImage> {
    let img = read_intensity_pgm(path).at_path(path)?;
    if !img.calibrated() && !cfg.analysis.allow_uncalibrated {
        return Err(CliError::config(
            "analysis.allow_uncalibrated",
            format!("{} has no pixel pitch sidecar; enable this key to analyze in pixel units", path.display()),
        ));
    }
    Ok(img)
}

pub fn analyze(ctx: &Context, cfg: &RunConfig, inputs: &[PathBuf], background: Option<&Path>, pairs: &[(usize, usize)]) -> CliResult<()> {
    if inputs.is_empty() {
        return Err(CliError::config("inputs", "no input images given"));
    }
    let mut m = ctx.manifest("analyze");
    echo(&mut m, cfg);
    ctx.prepare_out()?;
    let images = inputs.iter().map(|p| load(p, cfg)).collect::<CliResult<Vec<_>>>()?;
    let background = background.map(|p| load(p, cfg)).transpose()?;
    let pairs: Vec<(usize, usize)> = if !pairs.is_empty() {
        pairs.to_vec()
    } else if !cfg.analysis.pairs.is_empty() {
        cfg.analysis.pairs.clone()
    } else {
        (1..images.len()).map(|k| (0, k)).collect()
    };
    for &(i, j) in &pairs {
        if i >= images.len() || j >= images.len() {
            return Err(CliError::config("analysis.pairs", format!("pair {i}:{j} exceeds the {} inputs", images.len())));
        }
    }
    m.mark("load");

    let unit = |img: &LoadedImage| if img.calibrated() { "m" } else { "px" };
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let header = ["kind", "first", "second", "unit", "a_hat", "a_err", "snr_raw", "snr_post", "chirality", "shift_x", "shift_y", "ncc", "error"];
    wtr.write_record(header).map_err(|e| CliError::io("analysis.csv", e))?;

    for (k, img) in images.iter().enumerate() {
        let bg = match &background {
            Some(b) if !b.image.grid().same_as(img.image.grid()) => {
                return Err(CliError::config("background", format!("background grid does not match input {k}")));
            }
            Some(b) => Some(&b.image),
            None => None,
        };
        let r = analyze_field(cfg, &img.image, bg, img.calibrated());
        let u = unit(img);
        let error = r.errors.join("; ");
        m.block(
            format!("analysis.field.{k}"),
            vec![
                ("input".into(), inputs[k].display().to_string()),
                ("unit".into(), u.into()),
                (format!("a_hat_{u}"), opt(r.a_hat)),
                (format!("a_err_{u}"), opt(r.a_err)),
                ("snr_raw".into(), opt(r.snr_raw)),
                ("snr_post".into(), opt(r.snr_post)),
                ("chirality".into(), opt(r.chirality)),
                ("error".into(), error.clone()),
            ],
        );
        let k = k.to_string();
        let row = [
            "field", &k, "", u, &opt(r.a_hat), &opt(r.a_err), &opt(r.snr_raw), &opt(r.snr_post), &opt(r.chirality), "", "", "",
            &error,
        ];
        wtr.write_record(row).map_err(|e| CliError::io("analysis.csv", e))?;
    }
    m.mark("fields");

    for &(i, j) in &pairs {
        let (a, b) = (&images[i], &images[j]);
        let r = if a.image.grid().same_as(b.image.grid()) {
            analyze_pair(&a.image, &b.image)
        } else {
            PairResult { errors: vec!["grids differ".into()], ..Default::default() }
        };
        let u = unit(a);
        let error = r.errors.join("; ");
        let (sx, sy) = (r.shift.map(|s| s.0), r.shift.map(|s| s.1));
        m.block(
            format!("analysis.pair.{i}_{j}"),
            vec![
                ("unit".into(), u.into()),
                (format!("shift_x_{u}"), opt(sx)),
                (format!("shift_y_{u}"), opt(sy)),
                ("ncc".into(), opt(r.ncc)),
                ("error".into(), error.clone()),
            ],
        );
        let (si, sj) = (i.to_string(), j.to_string());
        let row = ["pair", &si, &sj, u, "", "", "", "", "", &opt(sx), &opt(sy), &opt(r.ncc), &error];
        wtr.write_record(row).map_err(|e| CliError::io("analysis.csv", e))?;
    }
    m.mark("pairs");

    let csv_path = ctx.path("analysis.csv");
    let bytes = wtr.into_inner().map_err(|e| CliError::io(&csv_path, e.to_string()))?;
    write_atomic(&csv_path, &bytes).at_path(&csv_path)?;
    m.output("analysis.csv");
    let path = m.write(&ctx.out)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    println!("analyze: results in {}", path.display());
    Ok(())
}

/// Runs the built-in checks. Returns whether every suite passed.
pub fn selftest(ctx: &Context, corrupt_transfer_sign: bool) -> bool {
    let suites = run_selftest(&SelftestOptions { seed: ctx.seed, corrupt_transfer_sign });
    for s in &suites {
        let status = if s.passed() { "PASS" } else { "FAIL" };
        println!("[{status}] {} ({:.2} s)", s.name, s.elapsed.as_secs_f64());
        for c in &s.checks {
            println!("    [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    let passed = suites.iter().filter(|s| s.passed()).count();
    println!("selftest: {passed}/{} suites passed", suites.len());
    passed == suites.len()
}
