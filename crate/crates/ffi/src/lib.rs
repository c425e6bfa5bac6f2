//! C interface to the rebalancing environment and trained policies.
//!
//! Every function returns a [`HagpsStatus`]. On failure the message is kept
//! per thread and can be read with [`hagps_last_error`]. Handles are opaque
//! and must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use hagps::checkpoint;
use hagps::env::Environment;
use hagps::experiment::{cmd_train, evaluate_greedy, load_environment, RunConfig};
use hagps::group::GroupTree;
use hagps::ppo::Actor;
use hagps::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HagpsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    Checkpoint = 5,
    ShapeMismatch = 6,
    BufferTooSmall = 7,
    Episode = 8,
    Internal = 9,
    Panic = 10,
}

/// A demand-replay environment.
pub struct HagpsEnv {
    env: Environment,
}

/// A trained group tree loaded from a checkpoint.
pub struct HagpsPolicy {
    tree: GroupTree,
}

/// Metrics of a greedy episode.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HagpsEval {
    pub service_ratio: f64,
    pub rebalanced: u64,
    pub mean_reward: f64,
    pub steps: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(HagpsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) | Error::Validation(_) | Error::Toml(_) => HagpsStatus::Config,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Ingest(_) => HagpsStatus::Io,
            Error::Checkpoint(_) => HagpsStatus::Checkpoint,
            Error::ShapeMismatch { .. } => HagpsStatus::ShapeMismatch,
            _ => HagpsStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HagpsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HagpsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside hagps".into());
            HagpsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(HagpsStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(HagpsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_out<'a, T>(
    p: *mut T,
    len: usize,
    need: usize,
    what: &str,
) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(Failure(
            HagpsStatus::BufferTooSmall,
            format!("{what} holds {len}, needs {need}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hagps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Build an environment from a TOML run configuration (its `data` and `env`
/// sections).
///
/// # Safety
/// `config_toml` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hagps_env_new(
    config_toml: *const c_char,
    out: *mut *mut HagpsEnv,
) -> HagpsStatus {
    guard(|| {
        let text = str_arg(config_toml, "config_toml")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = RunConfig::from_toml(text)?;
        let env = load_environment(&cfg)?;
        *out = Box::into_raw(Box::new(HagpsEnv { env }));
        Ok(())
    })
}

/// # Safety
/// `env` must come from [`hagps_env_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hagps_env_free(env: *mut HagpsEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Number of agents (regions).
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hagps_env_agents(env: *const HagpsEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.agents())
}

/// Nonzero once the horizon is reached.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hagps_env_done(env: *const HagpsEnv) -> i32 {
    env.as_ref().map_or(1, |e| i32::from(e.env.done()))
}

/// Restore the initial inventory and time.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hagps_env_reset(env: *mut HagpsEnv) -> HagpsStatus {
    guard(|| {
        env.as_mut().ok_or_else(|| null("env"))?.env.reset();
        Ok(())
    })
}

/// Copy the current inventory into `out` (`len` ≥ agents).
///
/// # Safety
/// `env` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn hagps_env_inventory(
    env: *const HagpsEnv,
    out: *mut u32,
    len: usize,
) -> HagpsStatus {
    guard(|| {
        let env = &env.as_ref().ok_or_else(|| null("env"))?.env;
        let inv = &env.state().inventory;
        slice_out(out, len, inv.len(), "out")?.copy_from_slice(inv);
        Ok(())
    })
}

/// Advance one interval. `actions` holds four outflows (N, S, E, W) per
/// agent; per-agent rewards are written to `rewards`.
///
/// # Safety
/// `env` must be a live handle, `actions` must hold `actions_len` values and
/// `rewards` must hold `rewards_len` values.
#[no_mangle]
pub unsafe extern "C" fn hagps_env_step(
    env: *mut HagpsEnv,
    actions: *const u32,
    actions_len: usize,
    rewards: *mut f64,
    rewards_len: usize,
) -> HagpsStatus {
    guard(|| {
        let env = &mut env.as_mut().ok_or_else(|| null("env"))?.env;
        let n = env.agents();
        if actions.is_null() {
            return Err(null("actions"));
        }
        if actions_len != 4 * n {
            return Err(Failure(
                HagpsStatus::ShapeMismatch,
                format!("expected {} actions, got {actions_len}", 4 * n),
            ));
        }
        if env.done() {
            return Err(Failure(
                HagpsStatus::Episode,
                "episode already finished".into(),
            ));
        }
        let flat = std::slice::from_raw_parts(actions, actions_len);
        let joint: Vec<[u32; 4]> = flat
            .chunks_exact(4)
            .map(|c| [c[0], c[1], c[2], c[3]])
            .collect();
        let out = slice_out(rewards, rewards_len, n, "rewards")?;
        let outcome = env.step(&joint)?;
        out.copy_from_slice(&outcome.rewards);
        Ok(())
    })
}

/// Load a trained policy.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hagps_policy_load(
    path: *const c_char,
    out: *mut *mut HagpsPolicy,
) -> HagpsStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let ckpt = checkpoint::load(&path)?;
        *out = Box::into_raw(Box::new(HagpsPolicy { tree: ckpt.tree }));
        Ok(())
    })
}

/// # Safety
/// `policy` must come from [`hagps_policy_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hagps_policy_free(policy: *mut HagpsPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

fn check_compatible(tree: &GroupTree, env: &Environment) -> Result<(), Failure> {
    if tree.agents() != env.agents() {
        return Err(Failure(
            HagpsStatus::ShapeMismatch,
            format!(
                "policy controls {} agents, environment has {}",
                tree.agents(),
                env.agents()
            ),
        ));
    }
    Ok(())
}

/// Greedy joint action for the current state, four outflows per agent.
///
/// # Safety
/// Both handles must be live and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn hagps_policy_act(
    policy: *const HagpsPolicy,
    env: *const HagpsEnv,
    out: *mut u32,
    len: usize,
) -> HagpsStatus {
    guard(|| {
        let tree = &policy.as_ref().ok_or_else(|| null("policy"))?.tree;
        let env = &env.as_ref().ok_or_else(|| null("env"))?.env;
        check_compatible(tree, env)?;
        let n = env.agents();
        let buf = slice_out(out, len, 4 * n, "out")?;
        let state = env.observe().to_input(env.scales());
        let open: Vec<[bool; 4]> = (0..n).map(|i| env.open_directions(i)).collect();
        let evals = tree.evaluate(&state, &open)?;
        for (chunk, (dist, _)) in buf.chunks_exact_mut(4).zip(&evals) {
            chunk.copy_from_slice(&dist.mode());
        }
        Ok(())
    })
}

/// Play a full greedy episode from the initial state. The environment handle
/// is left untouched.
///
/// # Safety
/// Both handles must be live and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hagps_policy_evaluate(
    policy: *const HagpsPolicy,
    env: *const HagpsEnv,
    out: *mut HagpsEval,
) -> HagpsStatus {
    guard(|| {
        let tree = &policy.as_ref().ok_or_else(|| null("policy"))?.tree;
        let env = &env.as_ref().ok_or_else(|| null("env"))?.env;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        check_compatible(tree, env)?;
        let r = evaluate_greedy(tree, env)?;
        *out = HagpsEval {
            service_ratio: r.service_ratio,
            rebalanced: r.rebalanced,
            mean_reward: r.mean_reward,
            steps: r.steps,
        };
        Ok(())
    })
}

/// Run a full training job described by a TOML configuration (which must set
/// `out`) and report the final greedy evaluation.
///
/// # Safety
/// `config_toml` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hagps_train(
    config_toml: *const c_char,
    out: *mut HagpsEval,
) -> HagpsStatus {
    guard(|| {
        let text = str_arg(config_toml, "config_toml")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let manifest = cmd_train(&RunConfig::from_toml(text)?)?;
        let r = manifest.eval;
        *out = HagpsEval {
            service_ratio: r.service_ratio,
            rebalanced: r.rebalanced,
            mean_reward: r.mean_reward,
            steps: r.steps,
        };
        Ok(())
    })
}
