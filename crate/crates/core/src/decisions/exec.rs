//! Concurrent decision execution: a bounded-concurrency, rate-capped,
//! retrying dispatcher over an asynchronous raw-text decision source.
//!
//! Completion order never leaks downstream: outcomes are returned sorted by
//! agent id, so the engine's apply phase is independent of backend timing.

use std::collections::BTreeMap;
use std::future::Future;
use std::pin::Pin;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use tokio::sync::Semaphore;

use super::{BackendConfig, DecisionFailure, DecisionPolicy, DecisionRequest, RawOutcome};
use crate::agents::AgentId;

pub type BoxFuture<'a, T> = Pin<Box<dyn Future<Output = T> + Send + 'a>>;

/// An asynchronous raw-text decision source. Errors are transport-level
/// messages; timeouts are enforced by the executor, not the decider.
pub trait Decider: Send + Sync {
    fn submit<'a>(
        &'a self,
        request: &'a DecisionRequest,
    ) -> BoxFuture<'a, Result<String, String>>;
}

/// Telemetry for one batch. Informational only: none of this participates
/// in canonical round-log bytes, so wall-clock jitter cannot break
/// reproducibility.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchTelemetry {
    /// Highest number of simultaneously outstanding requests observed.
    pub peak_in_flight: usize,
    /// Requests that needed at least one retry.
    pub retried_requests: usize,
    /// Total attempts across all requests.
    pub attempts_total: u64,
}

/// Dispatches request batches against a [`Decider`] on an owned tokio
/// runtime with an in-flight ceiling, optional request-rate cap, per-attempt
/// timeout, and exponential-backoff retries.
pub struct Executor<D: Decider + 'static> {
    decider: Arc<D>,
    config: BackendConfig,
    runtime: tokio::runtime::Runtime,
}

impl<D: Decider + 'static> Executor<D> {
    pub fn new(decider: D, config: BackendConfig) -> Result<Executor<D>, super::BackendConfigError> {
        config.validate()?;
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_time()
            .build()
            .expect("tokio runtime construction");
        Ok(Executor { decider: Arc::new(decider), config, runtime })
    }

    pub fn decider(&self) -> &D {
        &self.decider
    }

    /// Run a whole batch to completion. One outcome per request, sorted by
    /// agent id regardless of completion order.
    pub fn run_batch(&self, requests: Vec<DecisionRequest>) -> (Vec<RawOutcome>, BatchTelemetry) {
        let semaphore = Arc::new(Semaphore::new(self.config.max_in_flight));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        // Rate cap: a shared next-slot clock; each request claims the next
        // slot and sleeps until it.
        let pacer = self.config.requests_per_second.map(|rps| {
            (
                Arc::new(tokio::sync::Mutex::new(tokio::time::Instant::now())),
                Duration::from_secs_f64(1.0 / rps),
            )
        });
        let timeout = Duration::from_secs_f64(self.config.timeout_secs);
        let max_retries = self.config.max_retries;
        let retry_base = self.config.retry_base_secs;

        let mut outcomes = self.runtime.block_on(async {
            let mut handles = Vec::with_capacity(requests.len());
            for request in requests {
                let semaphore = Arc::clone(&semaphore);
                let in_flight = Arc::clone(&in_flight);
                let peak = Arc::clone(&peak);
                let pacer = pacer.clone();
                let decider = Arc::clone(&self.decider);
                handles.push(tokio::spawn(async move {
                    let _permit = semaphore.acquire_owned().await.expect("semaphore open");
                    if let Some((clock, interval)) = &pacer {
                        let slot = {
                            let mut next = clock.lock().await;
                            let now = tokio::time::Instant::now();
                            let slot = (*next).max(now);
                            *next = slot + *interval;
                            slot
                        };
                        tokio::time::sleep_until(slot).await;
                    }
                    let current = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(current, Ordering::SeqCst);

                    let mut attempts = 0u32;
                    let result = loop {
                        attempts += 1;
                        match tokio::time::timeout(timeout, decider.submit(&request)).await {
                            Ok(Ok(raw)) => break Ok(raw),
                            Ok(Err(message)) => {
                                if attempts > max_retries {
                                    break Err(DecisionFailure::Backend { attempts, message });
                                }
                            }
                            Err(_elapsed) => {
                                if attempts > max_retries {
                                    break Err(DecisionFailure::Timeout { attempts });
                                }
                            }
                        }
                        let backoff = retry_base * 2f64.powi(attempts as i32 - 1);
                        tokio::time::sleep(Duration::from_secs_f64(backoff)).await;
                    };

                    in_flight.fetch_sub(1, Ordering::SeqCst);
                    RawOutcome { agent: request.agent, result, attempts }
                }));
            }
            let mut out = Vec::with_capacity(handles.len());
            for handle in handles {
                out.push(handle.await.expect("decision task never panics"));
            }
            out
        });

        outcomes.sort_by_key(|o| o.agent);
        let telemetry = BatchTelemetry {
            peak_in_flight: peak.load(Ordering::SeqCst),
            retried_requests: outcomes.iter().filter(|o| o.attempts > 1).count(),
            attempts_total: outcomes.iter().map(|o| u64::from(o.attempts)).sum(),
        };
        (outcomes, telemetry)
    }
}

// ---------------------------------------------------------------------------
// mock decider
// ---------------------------------------------------------------------------

type LatencyFn = dyn Fn(AgentId, u32) -> Duration + Send + Sync;
type FailureFn = dyn Fn(AgentId, u32) -> Option<String> + Send + Sync;

/// In-process decider wrapping a policy, with programmable per-attempt
/// latency and failure injection plus its own in-flight instrumentation
/// (counts concurrently executing `submit` calls, including their sleeps).
pub struct MockDecider {
    policy: Arc<dyn DecisionPolicy>,
    latency: Box<LatencyFn>,
    failures: Box<FailureFn>,
    attempt_counts: Mutex<BTreeMap<AgentId, u32>>,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl MockDecider {
    pub fn new(policy: Arc<dyn DecisionPolicy>) -> MockDecider {
        MockDecider {
            policy,
            latency: Box::new(|_, _| Duration::ZERO),
            failures: Box::new(|_, _| None),
            attempt_counts: Mutex::new(BTreeMap::new()),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        }
    }

    /// Fixed latency for every attempt.
    pub fn with_uniform_latency(mut self, latency: Duration) -> MockDecider {
        self.latency = Box::new(move |_, _| latency);
        self
    }

    /// Deterministic pseudo-random latency in `[0, max)`, keyed by agent id
    /// and a seed, so "shuffling" timing is just changing the seed.
    pub fn with_seeded_latencies(mut self, seed: u64, max: Duration) -> MockDecider {
        let max_nanos = max.as_nanos() as u64;
        self.latency = Box::new(move |agent, attempt| {
            let h = crate::rng::label_hash(&format!("latency/{seed}/{}/{attempt}", agent.0));
            Duration::from_nanos(if max_nanos == 0 { 0 } else { h % max_nanos })
        });
        self
    }

    /// Inject failures: the callback returns an error message for (agent,
    /// attempt) pairs that should fail. Attempts count from 1.
    pub fn with_failures(
        mut self,
        failures: impl Fn(AgentId, u32) -> Option<String> + Send + Sync + 'static,
    ) -> MockDecider {
        self.failures = Box::new(failures);
        self
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }
}

impl Decider for MockDecider {
    fn submit<'a>(
        &'a self,
        request: &'a DecisionRequest,
    ) -> BoxFuture<'a, Result<String, String>> {
        Box::pin(async move {
            let attempt = {
                let mut counts = self.attempt_counts.lock().expect("attempt counter");
                let c = counts.entry(request.agent).or_insert(0);
                *c += 1;
                *c
            };
            let current = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak_in_flight.fetch_max(current, Ordering::SeqCst);
            let latency = (self.latency)(request.agent, attempt);
            if !latency.is_zero() {
                tokio::time::sleep(latency).await;
            }
            let result = match (self.failures)(request.agent, attempt) {
                Some(message) => Err(message),
                None => Ok(self.policy.decide(request)),
            };
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            result
        })
    }
}

// ---------------------------------------------------------------------------
// remote decider
// ---------------------------------------------------------------------------

/// Environment variable holding the backend API token. Credentials are
/// never accepted on the command line or in config files.
pub const API_TOKEN_ENV: &str = "EVACSIM_API_TOKEN";

/// HTTP decision backend.
///
/// Request body (JSON): `{"model", "persona", "category", "protocol",
/// "context", "chat": [{"round", "agent", "text"}], "destinations": [..]}`.
/// Expected response body: `{"text": "<wire-format decision>"}`.
#[cfg(feature = "remote")]
pub struct RemoteDecider {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    token: Option<String>,
}

#[cfg(feature = "remote")]
impl RemoteDecider {
    /// Build from config; the bearer token, if any, comes only from
    /// [`API_TOKEN_ENV`].
    pub fn from_config(config: &BackendConfig) -> Result<RemoteDecider, String> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| "remote backend requires an endpoint".to_string())?;
        let model = config
            .model
            .clone()
            .ok_or_else(|| "remote backend requires a model name".to_string())?;
        Ok(RemoteDecider {
            client: reqwest::Client::new(),
            endpoint,
            model,
            token: std::env::var(API_TOKEN_ENV).ok(),
        })
    }
}

#[cfg(feature = "remote")]
impl Decider for RemoteDecider {
    fn submit<'a>(
        &'a self,
        request: &'a DecisionRequest,
    ) -> BoxFuture<'a, Result<String, String>> {
        Box::pin(async move {
            let destinations: Vec<String> =
                request.destinations.iter().map(|d| d.label()).collect();
            let body = serde_json::json!({
                "model": self.model,
                "persona": request.persona,
                "category": request.category,
                "protocol": request.protocol,
                "context": request.context_text,
                "chat": request.group_chat_history,
                "destinations": destinations,
            });
            let mut req = self.client.post(&self.endpoint).json(&body);
            if let Some(token) = &self.token {
                req = req.bearer_auth(token);
            }
            let resp = req.send().await.map_err(|e| e.to_string())?;
            let status = resp.status();
            if !status.is_success() {
                return Err(format!("backend returned status {status}"));
            }
            #[derive(serde::Deserialize)]
            struct Reply {
                text: String,
            }
            let reply: Reply = resp.json().await.map_err(|e| e.to_string())?;
            Ok(reply.text)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decisions::{parse_outcomes, test_request, DecisionProtocol, NearestExit};
    use crate::geometry::Point;
    use crate::stadium::StadiumModel;

    fn batch(n: u32) -> Vec<DecisionRequest> {
        let model = StadiumModel::default_layout();
        (0..n)
            .map(|i| {
                let mut req = test_request(
                    i,
                    DecisionProtocol::GroupDiscussion,
                    Point::new(1200.0 + f64::from(i % 7), 450.0),
                    &model,
                );
                req.agent = AgentId(i);
                req
            })
            .collect()
    }

    fn quick_config(max_in_flight: usize) -> BackendConfig {
        BackendConfig {
            max_in_flight,
            timeout_secs: 5.0,
            max_retries: 2,
            retry_base_secs: 0.001,
            ..BackendConfig::default()
        }
    }

    #[test]
    fn in_flight_never_exceeds_ceiling() {
        let mock = MockDecider::new(Arc::new(NearestExit))
            .with_seeded_latencies(7, Duration::from_millis(3));
        let exec = Executor::new(mock, quick_config(16)).unwrap();
        let (outcomes, telemetry) = exec.run_batch(batch(200));
        assert_eq!(outcomes.len(), 200);
        assert!(outcomes.iter().all(|o| o.result.is_ok()));
        assert!(telemetry.peak_in_flight <= 16, "executor saw {}", telemetry.peak_in_flight);
        let decider_peak = exec.decider().peak_in_flight();
        assert!(decider_peak <= 16, "decider saw {decider_peak}");
        assert!(decider_peak > 1, "no concurrency actually happened");
    }

    #[test]
    fn outcomes_sorted_by_agent_regardless_of_timing() {
        let requests = batch(60);
        let run = |seed: u64| {
            let mock = MockDecider::new(Arc::new(NearestExit))
                .with_seeded_latencies(seed, Duration::from_millis(4));
            let exec = Executor::new(mock, quick_config(32)).unwrap();
            let (raw, _) = exec.run_batch(requests.clone());
            parse_outcomes(&requests, raw)
        };
        let a = run(1);
        let b = run(999);
        assert_eq!(a, b, "timing shuffle changed parsed outcomes");
        for (i, (agent, _)) in a.iter().enumerate() {
            assert_eq!(agent.0, i as u32);
        }
    }

    #[test]
    fn transient_failures_are_retried() {
        let mock = MockDecider::new(Arc::new(NearestExit)).with_failures(|agent, attempt| {
            (agent == AgentId(0) && attempt <= 2).then(|| "flaky".to_string())
        });
        let exec = Executor::new(mock, quick_config(8)).unwrap();
        let (outcomes, telemetry) = exec.run_batch(batch(3));
        assert!(outcomes[0].result.is_ok());
        assert_eq!(outcomes[0].attempts, 3);
        assert_eq!(outcomes[1].attempts, 1);
        assert_eq!(telemetry.retried_requests, 1);
        assert_eq!(telemetry.attempts_total, 5);
    }

    #[test]
    fn exhausted_retries_surface_as_failure() {
        let mock = MockDecider::new(Arc::new(NearestExit))
            .with_failures(|_, _| Some("down".to_string()));
        let exec = Executor::new(mock, quick_config(8)).unwrap();
        let (outcomes, _) = exec.run_batch(batch(2));
        for o in &outcomes {
            assert_eq!(
                o.result,
                Err(DecisionFailure::Backend { attempts: 3, message: "down".to_string() })
            );
        }
    }

    #[test]
    fn slow_backend_times_out() {
        let mock = MockDecider::new(Arc::new(NearestExit))
            .with_uniform_latency(Duration::from_millis(250));
        let config = BackendConfig {
            max_in_flight: 4,
            timeout_secs: 0.01,
            max_retries: 0,
            retry_base_secs: 0.001,
            ..BackendConfig::default()
        };
        let exec = Executor::new(mock, config).unwrap();
        let (outcomes, _) = exec.run_batch(batch(1));
        assert_eq!(outcomes[0].result, Err(DecisionFailure::Timeout { attempts: 1 }));
    }

    #[test]
    fn rate_cap_spaces_requests() {
        let mock = MockDecider::new(Arc::new(NearestExit));
        let config = BackendConfig {
            max_in_flight: 32,
            requests_per_second: Some(500.0),
            timeout_secs: 5.0,
            max_retries: 0,
            retry_base_secs: 0.001,
            ..BackendConfig::default()
        };
        let exec = Executor::new(mock, config).unwrap();
        let started = std::time::Instant::now();
        let (outcomes, _) = exec.run_batch(batch(20));
        let wall = started.elapsed();
        assert_eq!(outcomes.len(), 20);
        // 20 requests at 500/s need at least 19 slots of 2 ms.
        assert!(wall >= Duration::from_millis(30), "rate cap ignored: {wall:?}");
    }
}
