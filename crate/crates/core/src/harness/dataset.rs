//! Writes synthetic datasets to disk together with a ready-to-run config.

use std::path::{Path, PathBuf};

use super::config::Task;
use super::synth::{synth_cf, synth_relational, synth_topics, CfSynthSpec, RelationalSynthSpec, TopicSynthSpec};
use crate::error::{BdlError, Result};

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| BdlError::io(&p, e))
}

/// Generates data for `task` into `dir` and writes `dir/config.txt`, whose
/// relative paths resolve against `dir`. Returns the config path.
pub fn write_dataset(task: Task, dir: &Path, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| BdlError::io(dir, e))?;
    let mut cfg = format!("task = {}\noutput = run\nseed = {}\n", task.name(), seed);
    match task {
        Task::Cdl | Task::Cdr | Task::Mcdl | Task::McdlSym | Task::Bcdl => {
            let data = synth_cf(&CfSynthSpec {
                seed,
                ..CfSynthSpec::default()
            })?;
            write(dir, "content.txt", &data.content.to_text())?;
            write(dir, "ratings.txt", &data.train.to_text())?;
            write(dir, "test_ratings.txt", &data.test.to_text())?;
            cfg.push_str("content = content.txt\nratings = ratings.txt\ntest_ratings = test_ratings.txt\n");
            cfg.push_str("layers = 50,8\nlambda_n = 30\nlearning_rate = 0.001\nbatch_size = 32\n");
            cfg.push_str("epochs = 20\nnet_passes = 10\n");
            match task {
                Task::McdlSym => {
                    write(dir, "user_content.txt", &data.user_content.to_text())?;
                    cfg.push_str("user_content = user_content.txt\nlambda_v = 100\n");
                }
                // the posterior only concentrates near the point estimate when
                // the item tether and activation noise are tight
                Task::Bcdl => cfg.push_str(
                    "lambda_v = 10000\nlambda_u = 10\nlambda_s = 100000\nsweeps = 200\nburn_in = 100\nthin = 2\n",
                ),
                _ => cfg.push_str("lambda_v = 100\n"),
            }
        }
        Task::Rsdae => {
            let data = synth_relational(&RelationalSynthSpec {
                seed,
                ..RelationalSynthSpec::default()
            })?;
            write(dir, "content.txt", &data.content.to_text())?;
            write(dir, "graph.txt", &data.graph.to_text())?;
            write(dir, "tags.txt", &data.train.to_text())?;
            write(dir, "test_tags.txt", &data.test.to_text())?;
            cfg.push_str("content = content.txt\ngraph = graph.txt\nratings = tags.txt\ntest_ratings = test_tags.txt\n");
            cfg.push_str("layers = 24,8\nlambda_n = 30\nlearning_rate = 0.001\nbatch_size = 32\nepochs = 10\n");
        }
        Task::Dpfa => {
            let spec = TopicSynthSpec {
                seed,
                ..TopicSynthSpec::default()
            };
            let (counts, _) = synth_topics(&spec)?;
            write(dir, "counts.txt", &counts.to_text())?;
            let vocab: String = (0..counts.n_cols()).map(|j| format!("w{}\n", j)).collect();
            write(dir, "vocab.txt", &vocab)?;
            let h = &spec.hyper;
            cfg.push_str("counts = counts.txt\nvocab = vocab.txt\n");
            cfg.push_str(&format!(
                "topic_layers = {}\na_phi = {}\ne0 = {}\nf0 = {}\na0 = {}\nb0 = {}\nsweeps = 500\nburn_in = 250\nthin = 10\n",
                spec.topics, h.a_phi, h.e0, h.f0, h.a0, h.b0
            ));
        }
    }
    let path = dir.join("config.txt");
    std::fs::write(&path, cfg).map_err(|e| BdlError::io(&path, e))?;
    Ok(path)
}
