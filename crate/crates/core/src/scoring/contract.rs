//! Protocol contract checks for any service implementing `POST /score`.
//!
//! The checks assume nothing about absolute score values, only shape,
//! bounds, determinism, ordering and error signalling, so they can be run
//! unchanged against the builtin service or a neural adapter.

use serde_json::json;

use super::{ScoreItem, Scorer, ScorerSpec};
use crate::types::ScoreKind;

#[derive(Debug, Clone)]
pub struct ContractCheck {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

impl ContractCheck {
    pub fn passed(&self) -> bool {
        self.outcome.is_ok()
    }
}

const PROBES: [(&str, &str); 20] = [
    ("猫坐在垫子上。", "The cat sat on the mat."),
    ("今天天气很好。", "The weather is nice today."),
    ("我喜欢读书。", "I like reading books."),
    ("他明天去北京。", "He is going to Beijing tomorrow."),
    ("请把门关上。", "Please close the door."),
    ("Der Hund schläft.", "The dog is sleeping."),
    ("Ich trinke Kaffee.", "I am drinking coffee."),
    ("Das Buch ist rot.", "The book is red."),
    ("Wir fahren nach Berlin.", "We are driving to Berlin."),
    ("Es regnet heute.", "It is raining today."),
    ("私は学生です。", "I am a student."),
    ("駅はどこですか。", "Where is the station?"),
    ("水をください。", "Water, please."),
    ("今日は暑いです。", "It is hot today."),
    ("本を読みます。", "I read books."),
    ("这个问题很难。", "This question is difficult."),
    ("价格上涨了百分之五。", "Prices rose by five percent."),
    ("Die Sitzung beginnt um neun.", "The meeting starts at nine."),
    ("会議は三時に始まります。", "The meeting starts at three."),
    ("他们在公园里散步。", "They are walking in the park."),
];

fn scramble(text: &str) -> String {
    let mut words: Vec<&str> = text.split_whitespace().collect();
    words.reverse();
    words
        .iter()
        .map(|w| w.chars().rev().collect::<String>())
        .collect::<Vec<_>>()
        .join(" ")
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(), String>) -> ContractCheck {
    ContractCheck {
        name,
        outcome: f(),
    }
}

fn raw_post(url: &str, body: serde_json::Value) -> Result<(u16, serde_json::Value), String> {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(async {
        let resp = reqwest::Client::new()
            .post(url)
            .json(&body)
            .send()
            .await
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let bytes = resp.bytes().await.map_err(|e| e.to_string())?;
        let value = serde_json::from_slice(&bytes).unwrap_or(serde_json::Value::Null);
        Ok((status, value))
    })
}

fn score_url(endpoint: &str) -> String {
    if endpoint.ends_with("/score") {
        endpoint.to_owned()
    } else {
        format!("{}/score", endpoint.trim_end_matches('/'))
    }
}

/// Runs every contract check against `endpoint` (base URL or full `/score` URL).
pub fn run_contract_suite(endpoint: &str) -> Vec<ContractCheck> {
    let url = score_url(endpoint);
    let rb = Scorer::new(ScorerSpec::remote(ScoreKind::ReferenceBased, endpoint));
    let qe = Scorer::new(ScorerSpec::remote(ScoreKind::ReferenceFree, endpoint));
    let (rb, qe) = match (rb, qe) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            return vec![check("client construction", || Err(e.to_string()))];
        }
    };

    let mut out = Vec::new();

    out.push(check("two items yield two in-range scores", || {
        let items = [
            ScoreItem::new(PROBES[0].0, PROBES[0].1, Some(PROBES[0].1)),
            ScoreItem::new(PROBES[1].0, "completely unrelated", Some(PROBES[1].1)),
        ];
        let scores = rb.score_batch(&items).map_err(|e| e.to_string())?;
        if scores.len() != 2 {
            return Err(format!("expected 2 scores, got {}", scores.len()));
        }
        if scores.iter().any(|s| !(0.0..=100.0).contains(&s.value)) {
            return Err(format!("scores out of range: {scores:?}"));
        }
        Ok(())
    }));

    out.push(check("responses are order-aligned", || {
        let a = ScoreItem::new(PROBES[2].0, PROBES[2].1, Some(PROBES[2].1));
        let b = ScoreItem::new(PROBES[3].0, "xyz", Some(PROBES[3].1));
        let forward = rb.score_batch(&[a, b]).map_err(|e| e.to_string())?;
        let backward = rb.score_batch(&[b, a]).map_err(|e| e.to_string())?;
        if forward[0] != backward[1] || forward[1] != backward[0] {
            return Err(format!("{forward:?} vs reversed {backward:?}"));
        }
        Ok(())
    }));

    out.push(check("identical batches score identically", || {
        let items: Vec<ScoreItem> = PROBES
            .iter()
            .map(|(s, h)| ScoreItem::new(s, h, None))
            .collect();
        let first = qe.score_batch(&items).map_err(|e| e.to_string())?;
        let second = qe.score_batch(&items).map_err(|e| e.to_string())?;
        if first != second {
            return Err("repeated batch changed scores".into());
        }
        Ok(())
    }));

    out.push(check("exact match scores at least a scrambled hypothesis", || {
        let scrambled: Vec<String> = PROBES.iter().map(|(_, r)| scramble(r)).collect();
        let exact: Vec<ScoreItem> = PROBES
            .iter()
            .map(|(s, r)| ScoreItem::new(s, r, Some(r)))
            .collect();
        let worse: Vec<ScoreItem> = PROBES
            .iter()
            .zip(&scrambled)
            .map(|((s, r), h)| ScoreItem::new(s, h, Some(r)))
            .collect();
        let a = rb.score_batch(&exact).map_err(|e| e.to_string())?;
        let b = rb.score_batch(&worse).map_err(|e| e.to_string())?;
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            if x.value < y.value {
                return Err(format!("probe {i}: exact {} < scrambled {}", x.value, y.value));
            }
        }
        Ok(())
    }));

    out.push(check("reference-free request with reference is rejected", || {
        let body = json!({
            "mode": "reference_free",
            "items": [{"src": "a", "hyp": "b", "ref": "c"}]
        });
        let (status, value) = raw_post(&url, body)?;
        if status != 400 {
            return Err(format!("expected 400, got {status}"));
        }
        if value.get("error").and_then(|e| e.as_str()).is_none() {
            return Err("error body lacks \"error\" text".into());
        }
        Ok(())
    }));

    out.push(check("reference-based request without reference is rejected", || {
        let body = json!({
            "mode": "reference_based",
            "items": [{"src": "a", "hyp": "b"}]
        });
        let (status, _) = raw_post(&url, body)?;
        if status != 400 {
            return Err(format!("expected 400, got {status}"));
        }
        Ok(())
    }));

    out
}
