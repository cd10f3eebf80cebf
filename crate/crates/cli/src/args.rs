use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "kfp",
    version,
    about = "Kramers-Fokker-Planck numerical lab: constants, fibers, Green kernels, decay laws and resolvents"
)]
#[command(after_help = "Exit codes: 0 success, 1 numerical failure, 2 configuration error, \
3 numerical-trust guard violated (report still written), 4 acceptance failure.\n\
Set KFP_THREADS to fix the worker thread count.")]
pub struct Cli {
    /// Directory receiving the CSV, JSON and gnuplot files
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// TOML file with one table per command, e.g. [free-decay]; flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Also emit a gnuplot script that reads the CSV
    #[arg(long, global = true)]
    pub plot: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form constants and the heat-product identities
    #[command(
        after_help = "CSV constants.csv: dim, a_re, a_im, c_log, b_re, b_im, e_time, heat_product, identity_residual\n\
(odd dims fill a/b, even dims fill c_log/e_time; the others are empty)"
    )]
    Constants(ConstantsArgs),

    /// Eigenvalues of the truncated fiber operator against l + |xi|^2
    #[command(after_help = "CSV fiber_spectrum.csv: xi, index, re, im, level, predicted, residual, trusted")]
    FiberSpectrum(FiberSpectrumArgs),

    /// Low-energy coefficients of the free Green kernel
    #[command(after_help = "CSV green_coeffs.csv: term, k, re, im, reference_re, reference_im, relative_error\n\
(reference columns are filled for the leading coefficient)")]
    GreenCoeffs(GreenCoeffsArgs),

    /// Free decay of <e^{-tP0} f, g> by the radial fiber route
    #[command(
        after_help = "CSV free_decay.csv: t, pairing_re, pairing_im, prediction_re, prediction_im, ratio_re, ratio_im"
    )]
    FreeDecay(FreeDecayArgs),

    /// Full-grid time evolution with a potential and decay fit
    #[command(
        after_help = "CSV evolve.csv: t, pairing_re, pairing_im, prediction_re, prediction_im, ratio_re, ratio_im"
    )]
    Evolve(EvolveArgs),

    /// Low-energy expansion of <R(-lambda) f, g>
    #[command(after_help = "CSV resolvent_fit.csv: lambda, pairing_re, pairing_im")]
    ResolventFit(ResolventFitArgs),

    /// Limiting-absorption trace eps -> <R(lambda + i eps) f, g>
    #[command(
        after_help = "CSV lap_scan.csv: eps, pairing_re, pairing_im, plain_norm, cauchy, iterations, residual\n\
(cauchy is |p_k - p_(k-1)| and is empty on the first row)"
    )]
    LapScan(LapScanArgs),

    /// Resolvent norms along the imaginary axis
    #[command(after_help = "CSV high_energy_scan.csv: y, norm, smoothing_norm, resolved, iterations, residual")]
    HighEnergyScan(HighEnergyArgs),

    /// Run the acceptance criteria and print one PASS/FAIL line each
    #[command(after_help = "CSV acceptance.csv: id, title, passed, failed_checks, runtime_limit_s\n\
(measured runtimes are kept in acceptance.json only)")]
    Acceptance(AcceptanceArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ConstantsArgs {
    /// Inclusive dimension range `a..b` (or a single dimension) [default: 3..12]
    #[arg(long)]
    pub dim_range: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FiberSpectrumArgs {
    /// Velocity dimension [default: 1]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Frequencies |xi| along the first axis, comma separated [default: 0,0.5,1,1.5]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub xi: Option<Vec<f64>>,
    /// Hermite truncation per axis [default: 64 for dim 1, 8 otherwise]
    #[arg(long)]
    pub trunc: Option<usize>,
    /// Number of eigenvalues reported per frequency [default: 6]
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GreenCoeffsArgs {
    /// Spatial dimension [default: 5]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Probe separation |x - y| [default: 1.0]
    #[arg(long)]
    pub r: Option<f64>,
    /// [default: 1e-6]
    #[arg(long)]
    pub lambda_min: Option<f64>,
    /// [default: 1e-2]
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Number of lambda samples [default: 24]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Higher-order terms kept in the fit [default: the library default]
    #[arg(long)]
    pub extra_terms: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TimeArgs {
    /// First sample time
    #[arg(long)]
    pub t_min: Option<f64>,
    /// Last sample time
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Number of log-spaced times
    #[arg(long)]
    pub samples: Option<usize>,
    /// Lower end of the decay-fit window [default: t-min]
    #[arg(long)]
    pub fit_lo: Option<f64>,
    /// Upper end of the decay-fit window [default: t-max]
    #[arg(long)]
    pub fit_hi: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FreeDecayArgs {
    /// Spatial dimension [default: 4]
    #[arg(long)]
    pub dim: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub time: TimeArgs,
    /// Gaussian width of f [default: 1.0]
    #[arg(long)]
    pub sigma_f: Option<f64>,
    /// Gaussian width of g [default: 1.0]
    #[arg(long)]
    pub sigma_g: Option<f64>,
    /// Velocity profile of f: maxwellian or energy-moment [default: maxwellian]
    #[arg(long)]
    pub f_velocity: Option<String>,
    /// Give f a radial profile with vanishing spatial mean
    #[arg(long)]
    #[serde(default)]
    pub moment_free: bool,
    /// Hermite truncation of the fiber solves [default: 32]
    #[arg(long)]
    pub trunc: Option<usize>,
    /// Relative tolerance of the radial quadrature [default: 1e-9]
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Hermite tail mass above which results are untrusted [default: library threshold]
    #[arg(long)]
    pub tail_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GridArgs {
    /// Half width L of the periodic box [-L, L)^n
    #[arg(long = "box")]
    #[serde(rename = "box")]
    pub box_half_width: Option<f64>,
    /// Fourier nodes per spatial axis (power of two)
    #[arg(long)]
    pub nx: Option<usize>,
    /// Hermite modes per velocity axis
    #[arg(long)]
    pub nv: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PotentialArgs {
    /// Potential family: zero, polynomial-decay or compact-bump
    #[arg(long)]
    pub potential: Option<String>,
    /// Potential amplitude [default: 0.3]
    #[arg(long, allow_negative_numbers = true)]
    pub amplitude: Option<f64>,
    /// Decay exponent rho of the polynomial family [default: 6]
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    /// Support radius of the compact bump [default: 1]
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DataArgs {
    /// Datum family for f and g: gaussian, odd-gaussian or random
    #[arg(long)]
    pub data: Option<String>,
    /// Gaussian width of the data [default: 1.0]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Seed for the random family [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvolveArgs {
    /// Spatial dimension [default: 1]
    #[arg(long)]
    pub dim: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub time: TimeArgs,
    /// Integrator tolerance [default: 1e-8]
    #[arg(long)]
    pub tol: Option<f64>,
    /// Wrap-around guard: times must stay below beta L^2 [default: library value]
    #[arg(long)]
    pub wrap_beta: Option<f64>,
    /// Hermite tail mass above which results are untrusted [default: library value]
    #[arg(long)]
    pub tail_threshold: Option<f64>,
    /// Spatial weight index r of the pairing [default: 0]
    #[arg(long, allow_negative_numbers = true)]
    pub weight_r: Option<f64>,
    /// Velocity weight index s of the pairing [default: 0]
    #[arg(long, allow_negative_numbers = true)]
    pub weight_s: Option<f64>,
    /// Start from the state stored in this checkpoint instead of the datum family
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Write the state at t-max to this checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ResolventFitArgs {
    /// Spatial dimension [default: 4]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Computation route: auto, fiber (V = 0 only) or grid [default: auto]
    #[arg(long)]
    pub route: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Gaussian width of g on the fiber route [default: sigma]
    #[arg(long)]
    pub sigma_g: Option<f64>,
    /// [default: 1e-4]
    #[arg(long)]
    pub lambda_min: Option<f64>,
    /// [default: 5e-2]
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Number of lambda samples [default: 16]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Higher-order terms per family [default: 2]
    #[arg(long)]
    pub extra_terms: Option<usize>,
    /// Add a z^-1 column to detect an eigenvalue at zero
    #[arg(long)]
    #[serde(default)]
    pub pole: bool,
    /// Solver tolerance on the grid route [default: 1e-10]
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct LapScanArgs {
    /// Spatial dimension [default: 1]
    #[arg(long)]
    pub dim: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Energy 0 < lambda < 1 [default: 0.3]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Strictly decreasing eps schedule, comma separated [default: 1e-2,1e-3,1e-4,1e-5]
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Spatial weight index r [default: 0]
    #[arg(long, allow_negative_numbers = true)]
    pub weight_r: Option<f64>,
    /// Velocity weight index s [default: -2]
    #[arg(long, allow_negative_numbers = true)]
    pub weight_s: Option<f64>,
    /// Solver tolerance [default: 1e-12]
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct HighEnergyArgs {
    /// Spatial dimension [default: 1]
    #[arg(long)]
    pub dim: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// [default: 1e2]
    #[arg(long)]
    pub y_min: Option<f64>,
    /// [default: 2e3]
    #[arg(long)]
    pub y_max: Option<f64>,
    /// Number of log-spaced y values [default: 5]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Solver tolerance [default: 1e-10]
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AcceptanceArgs {
    /// Run the quick subset (criteria 1, 2, 3, 6, 8, 10)
    #[arg(long)]
    #[serde(default)]
    pub quick: bool,
    /// Run only these criteria, comma separated
    #[arg(long, value_delimiter = ',')]
    pub only: Option<Vec<u8>>,
}
