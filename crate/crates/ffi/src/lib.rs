//! C ABI for `balint`.
//!
//! Models are built through an opaque [`BiDgp`] handle. Every fallible call
//! returns a [`BiStatus`]; on failure the message is available from
//! [`bi_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use balint::coding::CodingScheme;
use balint::harness::{run_grid, write_results_csv};
use balint::intercept::{expectation_of_mean, solve};
use balint::{ClampPolicy, CovariateSpec, DgpSpec, Engine, Error, GridConfig, LinkSpec, Method, OutcomeFamily, RngStream, Term};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parameter = 3,
    UndefinedMoment = 4,
    Domain = 5,
    NoMgf = 6,
    Unsupported = 7,
    Index = 8,
    WrongLink = 9,
    EngineMismatch = 10,
    NoRoot = 11,
    OutOfRange = 12,
    Config = 13,
    Io = 14,
    Panic = 15,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiLink {
    Identity = 0,
    Log = 1,
    Logit = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiMethod {
    LinearScale = 0,
    LogClosedForm = 1,
    Numeric = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiCoding {
    ReferenceCell = 0,
    Effect = 1,
    WeightedEffect = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiClamp {
    ClampToUnit = 0,
    RejectOutOfRange = 1,
}

/// `n_mc == 0` selects the exact engine.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiEngine {
    pub n_mc: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiSolution {
    pub beta0: f64,
    pub method: BiMethod,
    pub residual: f64,
    pub iterations: usize,
    pub mc_se: f64,
    /// Bit set of warning flags, see `balint::Warnings`.
    pub warnings: u32,
}

/// Opaque model handle.
pub struct BiDgp {
    dgp: DgpSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BiStatus {
    match e {
        Error::Parameter { .. } => BiStatus::Parameter,
        Error::UndefinedMoment { .. } => BiStatus::UndefinedMoment,
        Error::Domain { .. } => BiStatus::Domain,
        Error::NoMgf { .. } => BiStatus::NoMgf,
        Error::Unsupported { .. } => BiStatus::Unsupported,
        Error::Index { .. } => BiStatus::Index,
        Error::WrongLink { .. } => BiStatus::WrongLink,
        Error::EngineMismatch { .. } => BiStatus::EngineMismatch,
        Error::NoRoot { .. } => BiStatus::NoRoot,
        Error::OutOfRange { .. } => BiStatus::OutOfRange,
        Error::Config { .. } => BiStatus::Config,
        Error::Io(_) => BiStatus::Io,
        Error::Scenario { source, .. } => status_of(source),
    }
}

enum Fail {
    Null(&'static str),
    Utf8(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard<F>(f: F) -> BiStatus
where
    F: FnOnce() -> Result<(), Fail>,
{
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BiStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            BiStatus::NullPointer
        }
        Ok(Err(Fail::Utf8(what))) => {
            set_error(format!("invalid UTF-8 in {what}"));
            BiStatus::InvalidUtf8
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            BiStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8(what))
}

unsafe fn dgp_mut<'a>(h: *mut BiDgp) -> Result<&'a mut BiDgp, Fail> {
    h.as_mut().ok_or(Fail::Null("handle"))
}

unsafe fn dgp_ref<'a>(h: *const BiDgp) -> Result<&'a BiDgp, Fail> {
    h.as_ref().ok_or(Fail::Null("handle"))
}

fn engine_of(e: BiEngine) -> Engine {
    if e.n_mc == 0 {
        Engine::Exact
    } else {
        Engine::MonteCarlo { n_mc: e.n_mc }
    }
}

fn method_in(m: BiMethod) -> Method {
    match m {
        BiMethod::LinearScale => Method::LinearScale,
        BiMethod::LogClosedForm => Method::LogClosedForm,
        BiMethod::Numeric => Method::Numeric,
    }
}

fn method_out(m: Method) -> BiMethod {
    match m {
        Method::LinearScale => BiMethod::LinearScale,
        Method::LogClosedForm => BiMethod::LogClosedForm,
        Method::Numeric => BiMethod::Numeric,
    }
}

/// Creates an empty model with a normal outcome of unit sd.
///
/// # Safety
/// `out` must be a valid pointer. The handle is released with [`bi_dgp_free`].
#[no_mangle]
pub unsafe extern "C" fn bi_dgp_new(link: BiLink, target_mean: f64, out: *mut *mut BiDgp) -> BiStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let link = match link {
            BiLink::Identity => LinkSpec::Identity,
            BiLink::Log => LinkSpec::Log,
            BiLink::Logit => LinkSpec::Logit,
        };
        let dgp = DgpSpec {
            terms: Vec::new(),
            link,
            outcome: OutcomeFamily::Normal { sd: 1.0 },
            target_mean,
        };
        *out = Box::into_raw(Box::new(BiDgp { dgp }));
        Ok(())
    })
}

/// Builds a model from a single-scenario TOML config.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bi_dgp_from_config(toml: *const c_char, out: *mut *mut BiDgp) -> BiStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let cfg = GridConfig::from_toml(text)?;
        cfg.check()?;
        let s = cfg.single()?;
        *out = Box::into_raw(Box::new(BiDgp { dgp: s.dgp }));
        Ok(())
    })
}

/// # Safety
/// `h` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn bi_dgp_free(h: *mut BiDgp) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

unsafe fn add_term(h: *mut BiDgp, name: *const c_char, dist: CovariateSpec, coef: Vec<f64>) -> BiStatus {
    guard(|| {
        let h = dgp_mut(h)?;
        let name = str_arg(name, "name")?;
        let term = Term::new(name, dist, coef);
        term.dist.validate()?;
        h.dgp.terms.push(term);
        if let Err(e) = h.dgp.validate() {
            h.dgp.terms.pop();
            return Err(e.into());
        }
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bi_dgp_add_bernoulli(h: *mut BiDgp, name: *const c_char, p: f64, coef: f64) -> BiStatus {
    add_term(h, name, CovariateSpec::Bernoulli { p }, vec![coef])
}

/// # Safety
/// `h` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bi_dgp_add_uniform(h: *mut BiDgp, name: *const c_char, a: f64, b: f64, coef: f64) -> BiStatus {
    add_term(h, name, CovariateSpec::Uniform { a, b }, vec![coef])
}

/// # Safety
/// `h` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bi_dgp_add_normal(h: *mut BiDgp, name: *const c_char, mu: f64, sigma: f64, coef: f64) -> BiStatus {
    add_term(h, name, CovariateSpec::Normal { mu, sigma }, vec![coef])
}

/// # Safety
/// `h` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bi_dgp_add_gamma(h: *mut BiDgp, name: *const c_char, shape: f64, rate: f64, coef: f64) -> BiStatus {
    add_term(h, name, CovariateSpec::Gamma { shape, rate }, vec![coef])
}

/// # Safety
/// `h` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bi_dgp_add_cauchy(
    h: *mut BiDgp,
    name: *const c_char,
    location: f64,
    scale: f64,
    coef: f64,
) -> BiStatus {
    add_term(h, name, CovariateSpec::Cauchy { location, scale }, vec![coef])
}

/// Adds a categorical with `levels` probabilities and `levels - 1`
/// coefficients.
///
/// # Safety
/// `probs` must point to `levels` doubles and `coefs` to `levels - 1`.
#[no_mangle]
pub unsafe extern "C" fn bi_dgp_add_categorical(
    h: *mut BiDgp,
    name: *const c_char,
    probs: *const f64,
    levels: usize,
    coefs: *const f64,
    coding: BiCoding,
) -> BiStatus {
    if probs.is_null() || (levels > 1 && coefs.is_null()) || levels == 0 {
        return guard(|| Err(Fail::Null("probs/coefs")));
    }
    let probs = std::slice::from_raw_parts(probs, levels).to_vec();
    let coef = if levels > 1 {
        std::slice::from_raw_parts(coefs, levels - 1).to_vec()
    } else {
        Vec::new()
    };
    let coding = match coding {
        BiCoding::ReferenceCell => CodingScheme::ReferenceCell,
        BiCoding::Effect => CodingScheme::Effect,
        BiCoding::WeightedEffect => CodingScheme::WeightedEffect,
    };
    add_term(h, name, CovariateSpec::Categorical { probs, coding }, coef)
}

/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bi_dgp_set_normal_outcome(h: *mut BiDgp, sd: f64) -> BiStatus {
    guard(|| {
        let h = dgp_mut(h)?;
        let old = h.dgp.outcome;
        h.dgp.outcome = OutcomeFamily::Normal { sd };
        h.dgp.validate().inspect_err(|_| h.dgp.outcome = old)?;
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bi_dgp_set_bernoulli_outcome(h: *mut BiDgp, clamp: BiClamp) -> BiStatus {
    guard(|| {
        let h = dgp_mut(h)?;
        let clamp = match clamp {
            BiClamp::ClampToUnit => ClampPolicy::ClampToUnit,
            BiClamp::RejectOutOfRange => ClampPolicy::RejectOutOfRange,
        };
        let old = h.dgp.outcome;
        h.dgp.outcome = OutcomeFamily::Bernoulli { clamp };
        h.dgp.validate().inspect_err(|_| h.dgp.outcome = old)?;
        Ok(())
    })
}

/// Solves the balancing intercept. `tol <= 0` selects the engine default.
/// Monte Carlo draws come from stream 0 of `seed`.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bi_solve(
    h: *const BiDgp,
    method: BiMethod,
    engine: BiEngine,
    tol: f64,
    seed: u64,
    out: *mut BiSolution,
) -> BiStatus {
    guard(|| {
        let h = dgp_ref(h)?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let engine = engine_of(engine);
        let tol = if tol > 0.0 { tol } else { engine.default_tol() };
        let s = solve(&h.dgp, method_in(method), engine, tol, &RngStream::new(seed, 0))?;
        *out = BiSolution {
            beta0: s.beta0,
            method: method_out(s.method),
            residual: s.residual,
            iterations: s.iterations,
            mc_se: s.mc_se,
            warnings: s.warnings.bits(),
        };
        Ok(())
    })
}

/// Achieved marginal mean `E[g^-1(beta0 + beta . X)]` and its Monte Carlo
/// standard error (zero under the exact engine).
///
/// # Safety
/// `h` must be a live handle; `value` and `se` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bi_expectation(
    h: *const BiDgp,
    beta0: f64,
    engine: BiEngine,
    seed: u64,
    value: *mut f64,
    se: *mut f64,
) -> BiStatus {
    guard(|| {
        let h = dgp_ref(h)?;
        if value.is_null() || se.is_null() {
            return Err(Fail::Null("value/se"));
        }
        let e = expectation_of_mean(beta0, &h.dgp, engine_of(engine), &RngStream::new(seed, 0))?;
        *value = e.value;
        *se = e.se;
        Ok(())
    })
}

/// Runs the scenario grid of a TOML config and returns the result CSV.
/// `workers == 0` keeps the config's value. Free the string with
/// [`bi_string_free`].
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out_csv` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bi_simulate_config(toml: *const c_char, workers: usize, out_csv: *mut *mut c_char) -> BiStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        if out_csv.is_null() {
            return Err(Fail::Null("out_csv"));
        }
        let mut cfg = GridConfig::from_toml(text)?;
        if workers > 0 {
            cfg.workers = workers;
        }
        cfg.check()?;
        let rows = run_grid(&cfg)?;
        let mut buf = Vec::new();
        write_results_csv(&rows, &mut buf)?;
        let s = CString::new(buf).map_err(|_| Error::Io("NUL byte in output".into()))?;
        *out_csv = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn bi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn bi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
