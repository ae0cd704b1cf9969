use std::time::Duration;

use thiserror::Error;

use super::prompt::RegulatedPrompt;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdapterError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("adapter misconfigured: {0}")]
    Config(String),
}

impl AdapterError {
    /// Configuration and client errors will not succeed on retry.
    pub fn is_retryable(&self) -> bool {
        match self {
            AdapterError::Timeout | AdapterError::Transport(_) | AdapterError::Malformed(_) => true,
            AdapterError::Status { status, .. } => *status == 429 || *status >= 500,
            AdapterError::Config(_) => false,
        }
    }
}

/// Text completion backend.
pub trait LlmAdapter: Send + Sync {
    fn complete(&self, prompt: &RegulatedPrompt) -> Result<String, AdapterError>;
}

impl<T: LlmAdapter + ?Sized> LlmAdapter for std::sync::Arc<T> {
    fn complete(&self, prompt: &RegulatedPrompt) -> Result<String, AdapterError> {
        (**self).complete(prompt)
    }
}

impl<T: LlmAdapter + ?Sized> LlmAdapter for Box<T> {
    fn complete(&self, prompt: &RegulatedPrompt) -> Result<String, AdapterError> {
        (**self).complete(prompt)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            initial_backoff: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    /// Two retries without sleeping, for tests and the mock adapter.
    pub fn immediate() -> Self {
        Self {
            retries: 2,
            initial_backoff: Duration::ZERO,
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff.saturating_mul(1u32 << attempt.min(16))
    }
}

/// Calls the adapter, retrying retryable failures with exponential backoff.
pub fn complete_with_retry(
    adapter: &dyn LlmAdapter,
    prompt: &RegulatedPrompt,
    policy: &RetryPolicy,
) -> Result<String, AdapterError> {
    let mut attempt = 0;
    loop {
        match adapter.complete(prompt) {
            Ok(text) => return Ok(text),
            Err(err) if err.is_retryable() && attempt < policy.retries => {
                let wait = policy.backoff(attempt);
                if !wait.is_zero() {
                    std::thread::sleep(wait);
                }
                attempt += 1;
            }
            Err(err) => return Err(err),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Schema;
    use crate::llm::prompt::{classify_prompt, DialogueContext};
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        error: AdapterError,
    }

    impl LlmAdapter for Flaky {
        fn complete(&self, _: &RegulatedPrompt) -> Result<String, AdapterError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(self.error.clone())
            } else {
                Ok("done".into())
            }
        }
    }

    fn prompt() -> RegulatedPrompt {
        classify_prompt(&Schema::admissions(), "hi", &DialogueContext::default())
    }

    #[test]
    fn recovers_within_two_retries() {
        let flaky = Flaky {
            failures: 2,
            calls: AtomicU32::new(0),
            error: AdapterError::Timeout,
        };
        assert_eq!(complete_with_retry(&flaky, &prompt(), &RetryPolicy::immediate()).unwrap(), "done");
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn surfaces_error_after_retries() {
        let flaky = Flaky {
            failures: 3,
            calls: AtomicU32::new(0),
            error: AdapterError::Transport("reset".into()),
        };
        assert!(complete_with_retry(&flaky, &prompt(), &RetryPolicy::immediate()).is_err());
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let flaky = Flaky {
            failures: 5,
            calls: AtomicU32::new(0),
            error: AdapterError::Status {
                status: 401,
                body: "no".into(),
            },
        };
        assert!(complete_with_retry(&flaky, &prompt(), &RetryPolicy::immediate()).is_err());
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy {
            retries: 2,
            initial_backoff: Duration::from_millis(100),
        };
        assert_eq!(p.backoff(0), Duration::from_millis(100));
        assert_eq!(p.backoff(1), Duration::from_millis(200));
    }
}
