use std::sync::Arc;
use std::time::Duration;

use notana_core::backend::BackendError;

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

#[derive(Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base: Duration,
    pub sleeper: Sleeper,
}

impl std::fmt::Debug for RetryPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RetryPolicy")
            .field("max_retries", &self.max_retries)
            .field("base", &self.base)
            .finish()
    }
}

impl RetryPolicy {
    pub fn new(max_retries: u32, base: Duration) -> Self {
        Self {
            max_retries,
            base,
            sleeper: Arc::new(std::thread::sleep),
        }
    }

    /// Delay before retry `n` (1-based): `base * 2^(n-1)`.
    pub fn delay(&self, n: u32) -> Duration {
        self.base.saturating_mul(1u32.checked_shl(n.saturating_sub(1)).unwrap_or(u32::MAX))
    }
}

/// Runs `op`, retrying transient failures with exponential backoff.
pub fn with_retries<T>(
    policy: &RetryPolicy,
    mut op: impl FnMut() -> Result<T, BackendError>,
) -> Result<T, BackendError> {
    let mut retry = 0;
    loop {
        match op() {
            Err(e) if e.is_transient() && retry < policy.max_retries => {
                retry += 1;
                (policy.sleeper)(policy.delay(retry));
            }
            other => return other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    fn recording(max: u32) -> (RetryPolicy, Arc<Mutex<Vec<Duration>>>) {
        let slept = Arc::new(Mutex::new(Vec::new()));
        let s = slept.clone();
        let policy = RetryPolicy {
            max_retries: max,
            base: Duration::from_secs(1),
            sleeper: Arc::new(move |d| s.lock().unwrap().push(d)),
        };
        (policy, slept)
    }

    #[test]
    fn backoff_doubles() {
        let (policy, slept) = recording(3);
        let mut calls = 0;
        let r: Result<(), _> = with_retries(&policy, || {
            calls += 1;
            Err(BackendError::Timeout)
        });
        assert_eq!(r, Err(BackendError::Timeout));
        assert_eq!(calls, 4);
        let secs: Vec<u64> = slept.lock().unwrap().iter().map(Duration::as_secs).collect();
        assert_eq!(secs, vec![1, 2, 4]);
    }

    #[test]
    fn permanent_errors_are_not_retried() {
        let (policy, slept) = recording(3);
        let mut calls = 0;
        let r: Result<(), _> = with_retries(&policy, || {
            calls += 1;
            Err(BackendError::Rejected("no".into()))
        });
        assert!(r.is_err());
        assert_eq!(calls, 1);
        assert!(slept.lock().unwrap().is_empty());
    }

    #[test]
    fn recovers_after_transient_failure() {
        let (policy, _) = recording(2);
        let mut calls = 0;
        let r = with_retries(&policy, || {
            calls += 1;
            if calls < 2 {
                Err(BackendError::Transport("reset".into()))
            } else {
                Ok(calls)
            }
        });
        assert_eq!(r, Ok(2));
    }
}
