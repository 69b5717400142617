//! C ABI over the simulator, the cluster-head policies and the evaluation
//! metrics.
//!
//! Conventions: every fallible call returns a [`GrssmStatus`] and writes
//! results through out-pointers. On failure the message is kept per thread
//! and read with [`grssm_last_error_message`]. Handles are opaque, created by
//! `*_new`/`*_load` calls and released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use grssm::baselines::{make_baseline, BaselineConfig, ClusterPolicy};
use grssm::dream::{PolicyBundle, WmPolicy};
use grssm::error::Error;
use grssm::eval;
use grssm::features::FeatureNorm;
use grssm::rng;
use grssm::sim::{catalog, Env};
use grssm::wm::WorldModel;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrssmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    /// Unreadable artifact: version, truncation, checksum or structure.
    Format = 5,
    Divergence = 6,
    UnknownName = 7,
    /// Output buffer length does not match the required size.
    BufferSize = 8,
    Panic = 9,
}

impl From<&Error> for GrssmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => GrssmStatus::Config,
            Error::InvalidArgument(_) => GrssmStatus::InvalidArgument,
            Error::Unknown { .. } => GrssmStatus::UnknownName,
            Error::Io { .. } => GrssmStatus::Io,
            Error::VersionMismatch { .. } | Error::Truncated(_) | Error::Checksum { .. } | Error::Corrupt(_) => {
                GrssmStatus::Format
            }
            Error::Divergence(_) => GrssmStatus::Divergence,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Fail(GrssmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail((&e).into(), e.to_string())
    }
}

type Res<T> = Result<T, Fail>;

fn guard(f: impl FnOnce() -> Res<()>) -> GrssmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            GrssmStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            GrssmStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(GrssmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(GrssmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Res<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Res<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Res<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn expect_len(got: usize, want: usize, what: &str) -> Res<()> {
    if got == want {
        Ok(())
    } else {
        Err(Fail(GrssmStatus::BufferSize, format!("{what} has length {got}, expected {want}")))
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn grssm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the calling thread's last error message, without the
/// terminating NUL. Zero after a successful call.
#[no_mangle]
pub extern "C" fn grssm_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `len - 1` bytes). Returns the number of bytes written without the NUL.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn grssm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let k = msg.len().min(len - 1);
        std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), k);
        *buf.add(k) = 0;
        k
    })
}

/// Simulator episode.
pub struct GrssmEnv {
    env: Env,
}

fn parse_overrides(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
}

/// Creates an episode of the named catalog scenario (or TOML file path) with
/// newline-separated `key=value` overrides (may be null). With
/// `full_horizon` non-zero the episode runs past terminal steps.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_env` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grssm_env_new(
    scenario: *const c_char,
    overrides: *const c_char,
    seed: u64,
    full_horizon: u8,
    out_env: *mut *mut GrssmEnv,
) -> GrssmStatus {
    guard(|| {
        let out_env = out(out_env, "out_env")?;
        let name = str_arg(scenario, "scenario")?;
        let ovr = if overrides.is_null() {
            Vec::new()
        } else {
            parse_overrides(str_arg(overrides, "overrides")?)
        };
        let sc = catalog::resolve(name, &ovr)?;
        let mut env = Env::new(sc, seed);
        if full_horizon != 0 {
            env = env.run_full_horizon();
        }
        *out_env = Box::into_raw(Box::new(GrssmEnv { env }));
        Ok(())
    })
}

/// # Safety
/// `env` must come from [`grssm_env_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn grssm_env_free(env: *mut GrssmEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn grssm_env_num_nodes(env: *const GrssmEnv, out_n: *mut usize) -> GrssmStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        *out(out_n, "out_n")? = env.env.snapshot().n();
        Ok(())
    })
}

/// Steps completed so far and whether the episode has finished.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn grssm_env_progress(env: *const GrssmEnv, out_steps: *mut usize, out_done: *mut u8) -> GrssmStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        *out(out_steps, "out_steps")? = env.env.steps();
        *out(out_done, "out_done")? = env.env.is_done() as u8;
        Ok(())
    })
}

/// Applies one CH vector (`n` bytes, 0 or 1).
///
/// # Safety
/// `actions` must hold `n` bytes; out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn grssm_env_step(
    env: *mut GrssmEnv,
    actions: *const u8,
    n: usize,
    out_reward: *mut f64,
    out_continue: *mut u8,
    out_done: *mut u8,
) -> GrssmStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        expect_len(n, env.env.snapshot().n(), "actions")?;
        let a = slice(actions, n, "actions")?;
        if a.iter().any(|&x| x > 1) {
            return Err(Fail(GrssmStatus::InvalidArgument, "actions must be 0 or 1".into()));
        }
        let o = env.env.step(a)?;
        *out(out_reward, "out_reward")? = o.reward;
        *out(out_continue, "out_continue")? = o.cont as u8;
        *out(out_done, "out_done")? = o.done as u8;
        Ok(())
    })
}

/// Fraction of alive nodes covered by a CH in the current snapshot.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn grssm_env_connectivity(env: *const GrssmEnv, out_ratio: *mut f64) -> GrssmStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        *out(out_ratio, "out_ratio")? = env.env.connectivity();
        Ok(())
    })
}

/// Copies per-node state: `positions` holds `2n` values (x, y pairs); the
/// other buffers hold `n`. Any buffer may be null to skip it.
///
/// # Safety
/// Non-null buffers must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn grssm_env_nodes(
    env: *const GrssmEnv,
    n: usize,
    positions: *mut f64,
    energy: *mut f64,
    alive: *mut u8,
    ch: *mut u8,
) -> GrssmStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        let nodes = &env.env.snapshot().nodes;
        expect_len(n, nodes.len(), "node buffers")?;
        if !positions.is_null() {
            let p = slice_mut(positions, 2 * n, "positions")?;
            for (i, node) in nodes.iter().enumerate() {
                p[2 * i] = node.position.x;
                p[2 * i + 1] = node.position.y;
            }
        }
        if !energy.is_null() {
            for (d, node) in slice_mut(energy, n, "energy")?.iter_mut().zip(nodes) {
                *d = node.energy;
            }
        }
        if !alive.is_null() {
            for (d, node) in slice_mut(alive, n, "alive")?.iter_mut().zip(nodes) {
                *d = node.alive as u8;
            }
        }
        if !ch.is_null() {
            for (d, node) in slice_mut(ch, n, "ch")?.iter_mut().zip(nodes) {
                *d = node.ch_flag as u8;
            }
        }
        Ok(())
    })
}

/// Row-major `n x n` adjacency of the current snapshot.
///
/// # Safety
/// `out_adj` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn grssm_env_adjacency(env: *const GrssmEnv, out_adj: *mut u8, len: usize) -> GrssmStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        let adj = &env.env.snapshot().adjacency;
        expect_len(len, adj.len(), "adjacency buffer")?;
        for (d, &a) in slice_mut(out_adj, len, "out_adj")?.iter_mut().zip(adj) {
            *d = a as u8;
        }
        Ok(())
    })
}

/// A cluster-head policy with its own random stream.
pub struct GrssmPolicy {
    policy: Box<dyn ClusterPolicy>,
    rng: ChaCha8Rng,
}

/// Baseline by name (`lowest_id`, `wca`, `leach`, `heed`, `dmac`, `random`)
/// with default hyperparameters. `e_init` is the scenario's initial energy.
///
/// # Safety
/// `name` must be NUL-terminated; `out_policy` writable.
#[no_mangle]
pub unsafe extern "C" fn grssm_policy_baseline(
    name: *const c_char,
    e_init: f64,
    seed: u64,
    out_policy: *mut *mut GrssmPolicy,
) -> GrssmStatus {
    guard(|| {
        let out_policy = out(out_policy, "out_policy")?;
        let name = str_arg(name, "name")?;
        let policy = make_baseline(name, &BaselineConfig::default(), e_init)?;
        *out_policy = Box::into_raw(Box::new(GrssmPolicy {
            policy,
            rng: rng::policy_rng(seed),
        }));
        Ok(())
    })
}

/// Trained world-model policy from its two checkpoints. Features are
/// normalised with the constants of `env`'s scenario.
///
/// # Safety
/// Paths must be NUL-terminated; `env` valid; `out_policy` writable.
#[no_mangle]
pub unsafe extern "C" fn grssm_policy_load(
    wm_path: *const c_char,
    policy_path: *const c_char,
    env: *const GrssmEnv,
    greedy: u8,
    seed: u64,
    out_policy: *mut *mut GrssmPolicy,
) -> GrssmStatus {
    guard(|| {
        let out_policy = out(out_policy, "out_policy")?;
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        let wm = WorldModel::load(Path::new(str_arg(wm_path, "wm_path")?))?;
        let bundle = PolicyBundle::load(Path::new(str_arg(policy_path, "policy_path")?))?;
        if bundle.dims() != (wm.cfg.hidden, wm.cfg.latent(), wm.cfg.global) {
            return Err(Fail(
                GrssmStatus::InvalidArgument,
                "policy checkpoint does not match the world model".into(),
            ));
        }
        let policy = WmPolicy::new(
            Arc::new(wm),
            Arc::new(bundle.actor),
            FeatureNorm::from_scenario(&env.env.scenario),
            greedy != 0,
        );
        *out_policy = Box::into_raw(Box::new(GrssmPolicy {
            policy: Box::new(policy),
            rng: rng::policy_rng(seed),
        }));
        Ok(())
    })
}

/// # Safety
/// `policy` must come from a `grssm_policy_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn grssm_policy_free(policy: *mut GrssmPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Clears per-episode memory.
///
/// # Safety
/// `policy` must be valid.
#[no_mangle]
pub unsafe extern "C" fn grssm_policy_reset(policy: *mut GrssmPolicy) -> GrssmStatus {
    guard(|| {
        policy.as_mut().ok_or_else(|| null("policy"))?.policy.reset();
        Ok(())
    })
}

/// Writes the CH vector the policy picks for `env`'s current snapshot.
///
/// # Safety
/// `out_actions` must hold `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn grssm_policy_act(
    policy: *mut GrssmPolicy,
    env: *const GrssmEnv,
    out_actions: *mut u8,
    n: usize,
) -> GrssmStatus {
    guard(|| {
        let p = policy.as_mut().ok_or_else(|| null("policy"))?;
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        let snap = env.env.snapshot();
        expect_len(n, snap.n(), "out_actions")?;
        let a = p.policy.act(snap, &mut p.rng);
        slice_mut(out_actions, n, "out_actions")?.copy_from_slice(&a);
        Ok(())
    })
}

/// Jain fairness index of `n` values.
///
/// # Safety
/// `values` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn grssm_jain_index(values: *const f64, n: usize, out_index: *mut f64) -> GrssmStatus {
    guard(|| {
        let v = slice(values, n, "values")?;
        let j = eval::jain_index(v).ok_or_else(|| {
            Fail(GrssmStatus::InvalidArgument, "Jain index needs a non-empty, not all-zero input".into())
        })?;
        *out(out_index, "out_index")? = j;
        Ok(())
    })
}

/// Total Hamming churn of `steps` consecutive CH vectors of `n` nodes,
/// stored row-major.
///
/// # Safety
/// `actions` must hold `steps * n` bytes.
#[no_mangle]
pub unsafe extern "C" fn grssm_ch_change_count(
    actions: *const u8,
    steps: usize,
    n: usize,
    out_count: *mut u64,
) -> GrssmStatus {
    guard(|| {
        let total = steps
            .checked_mul(n)
            .ok_or_else(|| Fail(GrssmStatus::InvalidArgument, "steps * n overflows".into()))?;
        let flat = slice(actions, total, "actions")?;
        let rows: Vec<Vec<u8>> = flat.chunks(n.max(1)).map(<[u8]>::to_vec).collect();
        *out(out_count, "out_count")? = eval::ch_change_count(&rows) as u64;
        Ok(())
    })
}

/// Two-sided Wilcoxon signed-rank test of `n` paired samples.
///
/// # Safety
/// `a` and `b` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn grssm_wilcoxon(
    a: *const f64,
    b: *const f64,
    n: usize,
    out_statistic: *mut f64,
    out_p: *mut f64,
) -> GrssmStatus {
    guard(|| {
        let w = eval::wilcoxon_signed_rank(slice(a, n, "a")?, slice(b, n, "b")?)?;
        *out(out_statistic, "out_statistic")? = w.statistic;
        *out(out_p, "out_p")? = w.p;
        Ok(())
    })
}
