#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// A small categorized corpus: `per_topic` documents for each topic, drawn
/// from topic-specific and shared word pools. Every fifth `earn` document
/// also lists `acq`.
pub fn write_corpus(root: &Path, per_topic: usize) {
    let pools: [(&str, &[&str]); 3] = [
        (
            "earn",
            &[
                "profit", "dividend", "quarter", "earnings", "shares", "revenue", "net",
            ],
        ),
        (
            "acq",
            &[
                "merger", "acquire", "takeover", "stake", "bid", "offer", "buyout",
            ],
        ),
        (
            "grain",
            &[
                "wheat", "corn", "harvest", "tonnes", "export", "crop", "barley",
            ],
        ),
    ];
    let shared = [
        "market", "company", "said", "reuter", "analysts", "week", "price",
    ];
    fs::create_dir_all(root.join("training")).unwrap();
    let mut cats = String::new();
    let mut id = 1000;
    for (t, (topic, pool)) in pools.iter().enumerate() {
        for d in 0..per_topic {
            id += 1;
            let mut text = String::new();
            for w in 0..18 {
                let word = if (w + d) % 3 == 0 {
                    shared[(w * 7 + d) % shared.len()]
                } else {
                    pool[(w * 3 + d * 5 + t) % pool.len()]
                };
                write!(text, "{} ", word).unwrap();
            }
            text.push_str("to be on a 12 of");
            let name = format!("training/{id}");
            fs::write(root.join(&name), text).unwrap();
            let extra = if *topic == "earn" && d % 5 == 0 {
                " acq"
            } else {
                ""
            };
            writeln!(cats, "{name} {topic}{extra}").unwrap();
        }
    }
    fs::write(root.join("cats.txt"), cats).unwrap();
}
