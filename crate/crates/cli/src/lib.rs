//! Command-line front end: parses arguments, runs one analysis and writes
//! its artifacts into the output directory.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use capcoupled::averaged::{solve_duty_for_target, solve_operating_point, DutyModel, OperatingPoint};
use capcoupled::closed_loop::{
    parse_scenario, simulate_closed_loop, ClosedLoopConfig, EventKind, ScenarioEvent,
};
use capcoupled::fmt::num;
use capcoupled::params::CONFIG_SCHEMA_VERSION;
use capcoupled::rational::{frequency_response, log_grid_hz, RationalTransferFunction};
use capcoupled::reference::{reference_report, ReportOptions};
use capcoupled::regulator::{
    closed_loop_audio, closed_loop_output_impedance, design_pi, loop_gain, pi_transfer_function,
    stability_margins, GcfSource, Margin, PIController,
};
use capcoupled::small_signal::{
    assemble_state_space, coefficients_analytic, coefficients_numeric, SmallSignalCoefficients,
    StateSpaceModel, DEFAULT_STEP,
};
use capcoupled::switched::{run_switched, DutyCommand, Schedule, SwitchedConfig, SwitchedState};
use capcoupled::transfer::{
    gvd_closed_form_with, gvd_first_order_with, gvi_closed_form_with, gvv_closed_form_with,
    resonant_parameters, ClosedForm, ResonantParameters,
};
use capcoupled::ConverterParams;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Bode sweep: 400 log-spaced points from 10 Hz to 10 MHz.
pub const BODE_POINTS: usize = 400;
const BODE_RANGE_HZ: (f64, f64) = (10.0, 10e6);

static VERSION: LazyLock<String> = LazyLock::new(|| {
    format!(
        "{} (config schema {CONFIG_SCHEMA_VERSION})",
        env!("CARGO_PKG_VERSION")
    )
});

#[derive(Parser, Debug)]
#[command(name = "capcoupled", version = VERSION.as_str(), about = "Capacitor-coupled dc-dc converter laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the averaged steady state.
    Steady(OpArgs),
    /// Small-signal coefficients and state-space matrices.
    Linearize(OpArgs),
    /// Open-loop Bode data for G_vd, G_vv, G_vi and first-order G_vd.
    Bode(BodeArgs),
    /// PI design, stability margins and closed-loop Bode data.
    DesignPi(DesignArgs),
    /// Switching-level simulation at a fixed duty.
    SimSwitched(SwitchedArgs),
    /// Regulated averaged-model simulation through a scenario.
    SimClosedLoop(ClosedLoopArgs),
    /// Compare computed dynamic parameters with the published ones.
    VerifyTables(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Converter configuration file.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Directory for the written artifacts.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug, Clone)]
pub struct OpArgs {
    #[command(flatten)]
    pub common: Common,
    /// Commanded duty ratio (default 0.5 when --vref is absent).
    #[arg(long, conflicts_with = "vref")]
    pub d1: Option<f64>,
    /// Target total output voltage; the duty is solved for it.
    #[arg(long)]
    pub vref: Option<f64>,
    /// Equivalent-duty expression.
    #[arg(long, value_enum, default_value_t = ModelArg::Exact)]
    pub model: ModelArg,
}

#[derive(Args, Debug, Clone)]
pub struct BodeArgs {
    #[command(flatten)]
    pub op: OpArgs,
    #[arg(long, value_enum, default_value_t = SourceArg::Oracle)]
    pub coeff_source: SourceArg,
    #[arg(long, value_enum, default_value_t = FormArg::Printed)]
    pub form: FormArg,
}

#[derive(Args, Debug, Clone)]
pub struct DesignArgs {
    #[command(flatten)]
    pub bode: BodeArgs,
    /// Desired loop crossover, Hz.
    #[arg(long, default_value_t = 1000.0)]
    pub gcf_hz: f64,
}

#[derive(Args, Debug, Clone)]
pub struct SwitchedArgs {
    #[command(flatten)]
    pub op: OpArgs,
    /// Events (source_step, load_step, load_resistance).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 10e-3)]
    pub t_end: f64,
    #[arg(long, default_value_t = 200)]
    pub steps_per_cycle: usize,
    /// Record every n-th integration step.
    #[arg(long, default_value_t = 10)]
    pub decimation: usize,
    /// Start with all states at zero instead of the averaged operating point.
    #[arg(long)]
    pub cold_start: bool,
    /// Keep going when a half cycle ends with current flowing.
    #[arg(long)]
    pub allow_ccm: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ClosedLoopArgs {
    #[command(flatten)]
    pub common: Common,
    /// Total output reference, V.
    #[arg(long, default_value_t = 176.0)]
    pub vref: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub gcf_hz: f64,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 50e-3)]
    pub t_end: f64,
    /// Output step, s (default t_sw/10).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub decimation: usize,
    #[arg(long, value_enum, default_value_t = ModelArg::Simplified)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = SourceArg::Oracle)]
    pub coeff_source: SourceArg,
    #[arg(long, value_enum, default_value_t = FormArg::Printed)]
    pub form: FormArg,
    /// Also run the switched model under the same regulator.
    #[arg(long)]
    pub switched: bool,
    #[arg(long, default_value_t = 200)]
    pub steps_per_cycle: usize,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 176.0)]
    pub vref: f64,
    #[arg(long, value_enum, default_value_t = ModelArg::Exact)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 1000.0)]
    pub gcf_hz: f64,
    #[arg(long, value_enum, default_value_t = FormArg::Printed)]
    pub form: FormArg,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelArg {
    Exact,
    Simplified,
}

impl From<ModelArg> for DutyModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Exact => DutyModel::Exact,
            ModelArg::Simplified => DutyModel::Simplified,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceArg {
    Printed,
    Oracle,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormArg {
    Printed,
    Loaded,
}

impl From<FormArg> for ClosedForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Printed => ClosedForm::Printed,
            FormArg::Loaded => ClosedForm::Loaded,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(capcoupled::Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure [{}]: {e}", e.name()),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<capcoupled::Error> for CliError {
    fn from(e: capcoupled::Error) -> Self {
        CliError::Numerical(e)
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code; messages go to `stdout`/`stderr`.
pub fn run_from<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match run(&cli.command) {
        Ok(files) => {
            for f in files {
                let _ = writeln!(stdout, "wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: &Command) -> CliResult<Vec<PathBuf>> {
    match command {
        Command::Steady(a) => steady(a),
        Command::Linearize(a) => linearize(a),
        Command::Bode(a) => bode(a),
        Command::DesignPi(a) => design(a),
        Command::SimSwitched(a) => sim_switched(a),
        Command::SimClosedLoop(a) => sim_closed_loop(a),
        Command::VerifyTables(a) => verify(a),
    }
}

fn load_params(path: &Path) -> CliResult<ConverterParams> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    ConverterParams::parse_config(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path) -> CliResult<Vec<ScenarioEvent>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Collects artifacts in memory; nothing is written until every one is
/// ready and none would overwrite an existing file without `--force`.
struct Outputs<'a> {
    common: &'a Common,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl<'a> Outputs<'a> {
    fn new(common: &'a Common) -> Self {
        Self {
            common,
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, body: Vec<u8>) {
        self.files.push((self.common.out.join(name), body));
    }

    fn commit(self) -> CliResult<Vec<PathBuf>> {
        if !self.common.force {
            if let Some((p, _)) = self.files.iter().find(|(p, _)| p.exists()) {
                return Err(CliError::Io(format!(
                    "{} exists (use --force to overwrite)",
                    p.display()
                )));
            }
        }
        fs::create_dir_all(&self.common.out)
            .map_err(|e| CliError::Io(format!("{}: {e}", self.common.out.display())))?;
        let mut written = Vec::new();
        for (path, body) in self.files {
            fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn operating_point(params: &ConverterParams, a: &OpArgs) -> CliResult<OperatingPoint> {
    let model = a.model.into();
    let op = match (a.d1, a.vref) {
        (_, Some(v)) => solve_duty_for_target(v, params.v_dc(), params, model)?,
        (d1, None) => solve_operating_point(d1.unwrap_or(0.5), params.v_dc(), params, model)?,
    };
    Ok(op)
}

fn coefficients(
    op: &OperatingPoint,
    params: &ConverterParams,
    source: SourceArg,
) -> CliResult<SmallSignalCoefficients> {
    Ok(match source {
        SourceArg::Printed => coefficients_analytic(op, params)?,
        SourceArg::Oracle => coefficients_numeric(op, params, DEFAULT_STEP)?,
    })
}

fn kv(s: &mut String, key: &str, value: f64) {
    let _ = writeln!(s, "{key} = {}", num(value));
}

fn op_text(s: &mut String, op: &OperatingPoint, model: DutyModel) {
    let _ = writeln!(s, "model = {}", model.as_str());
    kv(s, "d1", op.d1);
    kv(s, "v_dc", op.v_dc);
    kv(s, "i_l", op.i_l);
    kv(s, "v_out_stage", op.v_out_stage);
    kv(s, "i_out", op.i_out);
    kv(s, "d_e", op.d_e);
    kv(s, "v_out_total", op.v_out_total);
}

fn steady(a: &OpArgs) -> CliResult<Vec<PathBuf>> {
    let params = load_params(&a.common.config)?;
    let op = operating_point(&params, a)?;
    let mut s = String::from("# averaged operating point\n");
    op_text(&mut s, &op, a.model.into());
    let mut out = Outputs::new(&a.common);
    out.add("operating_point.txt", s.into_bytes());
    out.commit()
}

fn coeff_text(s: &mut String, c: &SmallSignalCoefficients) {
    let _ = writeln!(s, "[coefficients.{}]", c.source.as_str());
    kv(s, "d_t", c.d_t);
    kv(s, "g_t", c.g_t);
    kv(s, "i_t", c.i_t);
    kv(s, "r_p", c.r_p);
    kv(s, "d_p", c.d_p);
    kv(s, "v_p", c.v_p);
    let _ = writeln!(s, "zero_current = {}", c.zero_current);
}

fn state_space_text(s: &mut String, label: &str, m: &StateSpaceModel) {
    let row = |v: &[f64; 2]| format!("[{}, {}]", num(v[0]), num(v[1]));
    let _ = writeln!(s, "[state_space.{label}]");
    let _ = writeln!(s, "a = [{}, {}]", row(&m.a[0]), row(&m.a[1]));
    let _ = writeln!(s, "b1 = {}", row(&m.b1));
    let _ = writeln!(s, "b2 = {}", row(&m.b2));
    let _ = writeln!(s, "b3 = {}", row(&m.b3));
    let _ = writeln!(s, "c = {}", row(&m.c));
    let _ = writeln!(s, "d = {}", row(&m.d_sel));
}

fn linearize(a: &OpArgs) -> CliResult<Vec<PathBuf>> {
    let params = load_params(&a.common.config)?;
    let op = operating_point(&params, a)?;
    let mut s = String::from("# small-signal model\n[operating_point]\n");
    op_text(&mut s, &op, a.model.into());
    for source in [SourceArg::Printed, SourceArg::Oracle] {
        let c = coefficients(&op, &params, source)?;
        s.push('\n');
        coeff_text(&mut s, &c);
        s.push('\n');
        state_space_text(&mut s, c.source.as_str(), &assemble_state_space(&c, &params));
    }
    let mut out = Outputs::new(&a.common);
    out.add("linearization.txt", s.into_bytes());
    out.commit()
}

/// Bode CSV: `freq_hz,magnitude_db,phase_deg`, phase unwrapped.
pub fn bode_csv(tf: &RationalTransferFunction) -> CliResult<Vec<u8>> {
    let grid = log_grid_hz(BODE_RANGE_HZ.0, BODE_RANGE_HZ.1, BODE_POINTS);
    let resp = frequency_response(tf, &grid)?;
    let mut s = String::from("freq_hz,magnitude_db,phase_deg\n");
    for p in resp {
        let _ = writeln!(
            s,
            "{},{},{}",
            num(p.freq_hz()),
            num(p.magnitude_db),
            num(p.phase_deg)
        );
    }
    Ok(s.into_bytes())
}

struct Plant {
    coeffs: SmallSignalCoefficients,
    res: ResonantParameters,
    form: ClosedForm,
    gvd: RationalTransferFunction,
    gvv: RationalTransferFunction,
    gvi: RationalTransferFunction,
}

fn plant(
    params: &ConverterParams,
    op: &OperatingPoint,
    source: SourceArg,
    form: ClosedForm,
) -> CliResult<Plant> {
    let coeffs = coefficients(op, params, source)?;
    Ok(Plant {
        res: resonant_parameters(&coeffs, params)?,
        gvd: gvd_closed_form_with(&coeffs, params, form)?,
        gvv: gvv_closed_form_with(&coeffs, params, form)?,
        gvi: gvi_closed_form_with(&coeffs, params, form)?,
        coeffs,
        form,
    })
}

fn bode(a: &BodeArgs) -> CliResult<Vec<PathBuf>> {
    let params = load_params(&a.op.common.config)?;
    let op = operating_point(&params, &a.op)?;
    let pl = plant(&params, &op, a.coeff_source, a.form.into())?;
    let mut out = Outputs::new(&a.op.common);
    out.add("gvd.csv", bode_csv(&pl.gvd)?);
    out.add("gvv.csv", bode_csv(&pl.gvv)?);
    out.add("gvi.csv", bode_csv(&pl.gvi)?);
    match gvd_first_order_with(&pl.coeffs, &params, pl.form) {
        Ok(first) => out.add("gvd_first_order.csv", bode_csv(&first)?),
        Err(e) => log::warn!("first-order G_vd skipped: {e}"),
    }
    out.commit()
}

fn margin_text(m: Margin) -> String {
    match m {
        Margin::Finite(v) => num(v),
        Margin::Infinite => "inf".into(),
    }
}

fn design_controller(pl: &Plant, gcf_hz: f64) -> CliResult<(capcoupled::regulator::PiDesign, f64)> {
    let omega_o = pl.res.dominant_pole(pl.form);
    let d = design_pi(&pl.gvd, omega_o, 2.0 * std::f64::consts::PI * gcf_hz)?;
    Ok((d, omega_o))
}

fn design(a: &DesignArgs) -> CliResult<Vec<PathBuf>> {
    let common = &a.bode.op.common;
    let params = load_params(&common.config)?;
    let op = operating_point(&params, &a.bode.op)?;
    let pl = plant(&params, &op, a.bode.coeff_source, a.bode.form.into())?;
    let (d, omega_o) = design_controller(&pl, a.gcf_hz)?;
    let pi = d.controller;
    let lg = loop_gain(&pi, &pl.gvd);
    let m = stability_margins(&lg)?;

    let mut s = String::from("# PI regulator\n");
    let _ = writeln!(s, "coeff_source = {}", pl.coeffs.source.as_str());
    let _ = writeln!(s, "form = {}", pl.form.as_str());
    kv(&mut s, "d1", op.d1);
    kv(&mut s, "omega_o", omega_o);
    kv(&mut s, "k_p", pi.k_p);
    kv(&mut s, "omega_c", pi.omega_c);
    kv(&mut s, "gcf_desired", d.gcf_desired);
    kv(&mut s, "gcf_actual", d.gcf_actual);
    let _ = writeln!(
        s,
        "gcf_actual_source = {}",
        match d.gcf_source {
            GcfSource::Crossover => "crossover",
            GcfSource::FirstOrderAsymptote => "first-order asymptote",
        }
    );
    kv(&mut s, "loop_crossover", m.gain_crossover);
    kv(&mut s, "phase_margin_deg", m.phase_margin_deg);
    let _ = writeln!(s, "gain_margin_db = {}", margin_text(m.gain_margin_db));

    let mut out = Outputs::new(common);
    out.add("pi_design.txt", s.into_bytes());
    out.add("gc.csv", bode_csv(&pi_transfer_function(&pi))?);
    out.add("glg.csv", bode_csv(&lg)?);
    out.add("gvvc.csv", bode_csv(&closed_loop_audio(&pl.gvv, &lg))?);
    out.add("gvic.csv", bode_csv(&closed_loop_output_impedance(&pl.gvi, &lg))?);
    out.commit()
}

fn trace_csv(trace: &capcoupled::trace::SimulationTrace) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    trace
        .write_csv(&mut buf)
        .map_err(|e: io::Error| CliError::Io(e.to_string()))?;
    Ok(buf)
}

fn schedules(
    params: &ConverterParams,
    events: &[ScenarioEvent],
    v_ref_total: f64,
) -> CliResult<(Schedule, Schedule)> {
    let mut v_dc = Vec::new();
    let mut load = Vec::new();
    for e in events {
        match e.kind {
            EventKind::SourceStep(v) => v_dc.push((e.t, v)),
            EventKind::LoadResistance(r) => load.push((e.t, r)),
            EventKind::LoadStep(i) => load.push((e.t, v_ref_total / i)),
            EventKind::ReferenceStep(_) => {
                return Err(CliError::Config(
                    "reference_step needs a regulated simulation".into(),
                ));
            }
        }
    }
    Ok((
        Schedule::new(params.v_dc(), v_dc)?,
        Schedule::new(params.r_l(), load)?,
    ))
}

fn sim_switched(a: &SwitchedArgs) -> CliResult<Vec<PathBuf>> {
    let params = load_params(&a.op.common.config)?;
    let op = operating_point(&params, &a.op)?;
    let events = match &a.scenario {
        Some(p) => load_scenario(p)?,
        None => Vec::new(),
    };
    let (v_dc, load) = schedules(&params, &events, op.v_out_total)?;
    let cfg = SwitchedConfig {
        t_end: a.t_end,
        steps_per_cycle: a.steps_per_cycle,
        record_decimation: a.decimation,
        ccm: if a.allow_ccm {
            capcoupled::switched::CcmPolicy::Allow
        } else {
            Default::default()
        },
        initial: (!a.cold_start).then(|| SwitchedState::from_operating_point(&op, &params)),
        ..Default::default()
    };
    let run = run_switched(
        &params,
        &DutyCommand::Schedule(Schedule::constant(op.d1)),
        &v_dc,
        &load,
        &cfg,
    )?;
    let mut out = Outputs::new(&a.op.common);
    out.add("trace_switched.csv", trace_csv(&run.trace)?);
    out.commit()
}

fn sim_closed_loop(a: &ClosedLoopArgs) -> CliResult<Vec<PathBuf>> {
    let params = load_params(&a.common.config)?;
    let events = match &a.scenario {
        Some(p) => load_scenario(p)?,
        None => Vec::new(),
    };
    let model: DutyModel = a.model.into();
    let op = solve_duty_for_target(a.vref, params.v_dc(), &params, model)?;
    let pl = plant(&params, &op, a.coeff_source, a.form.into())?;
    let (d, _) = design_controller(&pl, a.gcf_hz)?;
    let pi: PIController = d.controller;
    let cfg = ClosedLoopConfig {
        t_end: a.t_end,
        dt: a.dt,
        model,
        record_decimation: a.decimation,
    };
    let trace = simulate_closed_loop(&params, &pi, a.vref, &events, &cfg)?;
    let mut out = Outputs::new(&a.common);
    out.add("trace_closed_loop.csv", trace_csv(&trace)?);
    if a.switched {
        let (v_dc, load) = schedules(&params, &events, a.vref)?;
        let start = params
            .with_load(load.at(0.0))
            .map_err(|e| CliError::Config(e.to_string()))?;
        let start_op = solve_duty_for_target(a.vref, v_dc.at(0.0), &start, DutyModel::Exact)?;
        let sw_cfg = SwitchedConfig {
            t_end: a.t_end,
            steps_per_cycle: a.steps_per_cycle,
            record_decimation: a.steps_per_cycle / 20,
            initial: Some(SwitchedState::from_operating_point(&start_op, &params)),
            ..Default::default()
        };
        let duty = DutyCommand::Regulated {
            controller: pi,
            v_ref_total: a.vref,
            initial_duty: start_op.d1,
        };
        let run = run_switched(&params, &duty, &v_dc, &load, &sw_cfg)?;
        out.add("trace_switched_closed_loop.csv", trace_csv(&run.trace)?);
    }
    out.commit()
}

fn verify(a: &VerifyArgs) -> CliResult<Vec<PathBuf>> {
    let params = load_params(&a.common.config)?;
    let options = ReportOptions {
        v_out_total: a.vref,
        v_dc: params.v_dc(),
        model: a.model.into(),
        gcf_desired_hz: a.gcf_hz,
        form: a.form.into(),
    };
    let report = reference_report(&params, options)?;
    let mut out = Outputs::new(&a.common);
    out.add("verify_tables.txt", report.render().into_bytes());
    out.commit()
}
