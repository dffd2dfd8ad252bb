#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use mtcascade::calibration::{calibrate_pplt, calibrate_qet, select_jdm_samples, JdmSelection, PolicyThresholds};
use mtcascade::decider::{train_linear_decider, Decider, DeciderSpec, Policy, TrainOptions};
use mtcascade::ngram::{train_lm, NgramLanguageModel, TrainConfig};
use mtcascade::router::{BackendSpec, RouterConfig, SimulatedBackendProfile};
use mtcascade::synth::{synth_corpus, synth_pair, synth_records, SynthConfig};
use mtcascade::EvalRecord;

pub fn records(n: usize, seed: u64, hard_fraction: f64) -> Vec<EvalRecord> {
    synth_records(&SynthConfig {
        hard_fraction,
        ..SynthConfig::new(n, seed)
    })
}

/// LM, thresholds and a trained JDM classifier built from seeded synthetic data.
pub struct Fixture {
    pub lm: Arc<NgramLanguageModel>,
    pub thresholds: PolicyThresholds,
    pub jdm: Decider,
}

impl Fixture {
    pub fn build() -> Self {
        let lm = Arc::new(train_lm(&synth_corpus(5000, 11, 0.2), &TrainConfig::default()).unwrap());
        let calibration = records(4000, 12, 0.2);
        let mut thresholds = PolicyThresholds::new(synth_pair(), 0.25);
        thresholds.qet_threshold = Some(calibrate_qet(&calibration, 0.25).unwrap());
        let sources: Vec<&str> = calibration.iter().map(|r| r.segment.text.as_str()).collect();
        thresholds.pplt_threshold = Some(calibrate_pplt(lm.as_ref(), &sources, 0.25).unwrap());
        let set = select_jdm_samples(
            &calibration,
            &JdmSelection {
                t1_fraction: 0.10,
                n_pos: 100,
                neg_ratio: 3,
                seed: 7,
            },
        )
        .unwrap();
        thresholds.jdm_t1 = Some(set.t1);
        thresholds.jdm_t2 = Some(set.t2);
        let clf = train_linear_decider(&set, lm.as_ref(), &TrainOptions::default()).unwrap();
        let jdm = Decider::from_parts(Policy::Jdm, thresholds.clone(), 0.5, Some(lm.clone()), Some(clf)).unwrap();
        Self { lm, thresholds, jdm }
    }

    pub fn decider(&self, policy: Policy) -> Decider {
        match policy {
            Policy::Jdm => self.jdm.clone(),
            Policy::Pplt => Decider::from_parts(policy, self.thresholds.clone(), 0.5, Some(self.lm.clone()), None).unwrap(),
            _ => Decider::simple(policy, self.thresholds.clone()).unwrap(),
        }
    }
}

/// Router config whose simulated backends return the records' hypotheses.
pub fn simulated_config(records: &[EvalRecord], policy: Policy, thresholds: &PolicyThresholds) -> RouterConfig {
    let table = |f: fn(&EvalRecord) -> Option<&String>| -> BTreeMap<String, String> {
        records
            .iter()
            .filter_map(|r| f(r).map(|h| (r.id().to_owned(), h.clone())))
            .collect()
    };
    RouterConfig {
        pair: synth_pair(),
        decider: DeciderSpec::new(policy, thresholds.clone()),
        nmt: BackendSpec::simulated(SimulatedBackendProfile {
            table: table(|r| r.nmt_hyp.as_ref()),
            ..Default::default()
        }),
        llm: BackendSpec::simulated(SimulatedBackendProfile {
            table: table(|r| r.llm_hyp.as_ref()),
            ..Default::default()
        }),
        fallback_enabled: false,
        listen_address: "127.0.0.1:0".into(),
        qe_scorer: None,
        language_names: BTreeMap::new(),
    }
}

/// An axum app served from a background thread with its own runtime.
pub struct TestServer {
    pub base_url: String,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl TestServer {
    pub fn spawn(app: axum::Router) -> Self {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stop_rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self {
            base_url: format!("http://{addr}"),
            shutdown: Some(stop_tx),
            thread: Some(thread),
        }
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// A port nothing listens on.
pub fn closed_port_url() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}")
}
