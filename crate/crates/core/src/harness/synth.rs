//! Synthetic data with planted structure for every task family.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::corpus::{BagOfWords, ImplicitRatings, ItemGraph};
use crate::dpfa::{generate_synthetic, PfaHyper, PfaState, SbnParams};
use crate::error::{BdlError, Result};
use crate::rng::{block_rng, child_seed};

/// Collaborative-filtering data: users and items share `latent` planted
/// factors; item content is a bag of words whose first `signal_fraction` of
/// the vocabulary is driven by the item factors and whose remainder is driven
/// by independent nuisance factors.
#[derive(Debug, Clone, PartialEq)]
pub struct CfSynthSpec {
    pub users: usize,
    pub items: usize,
    pub vocab: usize,
    pub latent: usize,
    /// Training positives per user.
    pub train_per_user: usize,
    /// Held-out positives per user.
    pub test_per_user: usize,
    /// Expected words per item.
    pub words_per_item: f64,
    pub signal_fraction: f64,
    /// Scale of the nuisance log-rates relative to the signal ones.
    pub nuisance_scale: f64,
    /// Inverse temperature of the preference softmax.
    pub sharpness: f64,
    pub seed: u64,
}

impl Default for CfSynthSpec {
    fn default() -> Self {
        CfSynthSpec {
            users: 100,
            items: 200,
            vocab: 50,
            latent: 8,
            train_per_user: 2,
            test_per_user: 5,
            words_per_item: 60.0,
            signal_fraction: 0.5,
            nuisance_scale: 0.5,
            sharpness: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CfSynth {
    pub content: BagOfWords,
    /// Attribute counts per user, generated from the user factors the same
    /// way as item content.
    pub user_content: BagOfWords,
    pub train: ImplicitRatings,
    pub test: ImplicitRatings,
    pub user_factors: Array2<f64>,
    pub item_factors: Array2<f64>,
}

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = rng.sample(StandardNormal);
        z * scale
    })
}

fn softmax_counts(logits: Array1<f64>, total: f64, rng: &mut impl Rng) -> Vec<(usize, u32)> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.mapv(|z| (z - max).exp());
    let s = e.sum();
    let mut row = Vec::new();
    for (b, &w) in e.iter().enumerate() {
        let rate = total * w / s;
        if rate > 0.0 {
            let c = Poisson::new(rate).expect("positive rate").sample(rng) as u32;
            if c > 0 {
                row.push((b, c));
            }
        }
    }
    row
}

fn bag_from_factors(factors: &Array2<f64>, spec: &CfSynthSpec, label: &str) -> Result<BagOfWords> {
    let seed = child_seed(spec.seed, label);
    let mut rng = block_rng(seed, 0, 0);
    let n_signal = ((spec.vocab as f64) * spec.signal_fraction).round() as usize;
    let n_signal = n_signal.min(spec.vocab);
    let scale = 1.0 / (spec.latent as f64).sqrt();
    let loadings = gaussian(n_signal, spec.latent, 2.0 * scale, &mut rng);
    let nuisance_loadings = gaussian(spec.vocab - n_signal, spec.latent, 2.0 * scale, &mut rng);
    let mut rows = Vec::with_capacity(factors.nrows());
    for j in 0..factors.nrows() {
        let mut r = block_rng(seed, 1, j as u64);
        let nuisance: Array1<f64> = (0..spec.latent).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let mut logits = Array1::zeros(spec.vocab);
        logits.slice_mut(ndarray::s![..n_signal]).assign(&loadings.dot(&factors.row(j)));
        logits
            .slice_mut(ndarray::s![n_signal..])
            .assign(&(nuisance_loadings.dot(&nuisance) * spec.nuisance_scale));
        rows.push(softmax_counts(logits, spec.words_per_item, &mut r));
    }
    BagOfWords::new(spec.vocab, rows)
}

/// Draws a planted collaborative-filtering instance. Every user's positives
/// are sampled without replacement from `softmax(sharpness · u_iᵀ v_j)`; the
/// first `train_per_user` go to training, the rest to the test matrix.
pub fn synth_cf(spec: &CfSynthSpec) -> Result<CfSynth> {
    if spec.users == 0 || spec.items == 0 || spec.vocab == 0 || spec.latent == 0 {
        return Err(BdlError::config("users", "synthetic dimensions must be positive"));
    }
    let per_user = spec.train_per_user + spec.test_per_user;
    if per_user == 0 || per_user > spec.items {
        return Err(BdlError::config("train_per_user", "positives per user must lie in 1..=items"));
    }
    if !(0.0..=1.0).contains(&spec.signal_fraction) {
        return Err(BdlError::config("signal_fraction", "must lie in [0, 1]"));
    }
    let mut rng = block_rng(child_seed(spec.seed, "cf-factors"), 0, 0);
    let user_factors = gaussian(spec.users, spec.latent, 1.0, &mut rng);
    let item_factors = gaussian(spec.items, spec.latent, 1.0, &mut rng);
    let scale = spec.sharpness / (spec.latent as f64).sqrt();
    let mut train = Vec::with_capacity(spec.users);
    let mut test = Vec::with_capacity(spec.users);
    for i in 0..spec.users {
        let mut r = block_rng(child_seed(spec.seed, "cf-ratings"), 0, i as u64);
        let scores = item_factors.dot(&user_factors.row(i)) * scale;
        // Gumbel top-k = sampling without replacement from the softmax
        let mut keyed: Vec<(f64, usize)> = scores
            .iter()
            .enumerate()
            .map(|(j, &s)| {
                let u: f64 = r.random::<f64>().max(f64::MIN_POSITIVE);
                (s - (-u.ln()).ln(), j)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = keyed.iter().take(per_user).map(|&(_, j)| j).collect();
        chosen.shuffle(&mut r);
        let (a, b) = chosen.split_at(spec.train_per_user);
        let (mut a, mut b) = (a.to_vec(), b.to_vec());
        a.sort_unstable();
        b.sort_unstable();
        train.push(a);
        test.push(b);
    }
    Ok(CfSynth {
        content: bag_from_factors(&item_factors, spec, "cf-content")?,
        user_content: bag_from_factors(&user_factors, spec, "cf-user-content")?,
        train: ImplicitRatings::new(spec.items, train, 1.0, 0.01)?,
        test: ImplicitRatings::new(spec.items, test, 1.0, 0.01)?,
        user_factors,
        item_factors,
    })
}

/// Community-structured relational data: items belong to `communities`
/// groups, links are dense inside a group and sparse across groups, and
/// content words are drawn from a per-community profile. Tags (the "users"
/// of the tag-recommendation split) each favour one community.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationalSynthSpec {
    pub items: usize,
    pub vocab: usize,
    pub communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub words_per_item: f64,
    /// Weight of the community profile against a uniform background.
    pub purity: f64,
    pub tags: usize,
    pub items_per_tag: usize,
    pub test_per_tag: usize,
    pub seed: u64,
}

impl Default for RelationalSynthSpec {
    fn default() -> Self {
        RelationalSynthSpec {
            items: 60,
            vocab: 40,
            communities: 3,
            p_in: 0.3,
            p_out: 0.01,
            words_per_item: 40.0,
            purity: 0.6,
            tags: 30,
            items_per_tag: 8,
            test_per_tag: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RelationalSynth {
    pub content: BagOfWords,
    pub graph: ItemGraph,
    pub community: Vec<usize>,
    pub train: ImplicitRatings,
    pub test: ImplicitRatings,
}

pub fn synth_relational(spec: &RelationalSynthSpec) -> Result<RelationalSynth> {
    if spec.items == 0 || spec.vocab == 0 || spec.communities == 0 || spec.communities > spec.items {
        return Err(BdlError::config("communities", "need 1..=items communities and a nonempty vocabulary"));
    }
    for (key, p) in [("p_in", spec.p_in), ("p_out", spec.p_out), ("purity", spec.purity)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(BdlError::config(key, "must lie in [0, 1]"));
        }
    }
    let mut rng = block_rng(child_seed(spec.seed, "relational"), 0, 0);
    let community: Vec<usize> = (0..spec.items).map(|j| j % spec.communities).collect();
    let mut edges = Vec::new();
    for u in 0..spec.items {
        for v in u + 1..spec.items {
            let p = if community[u] == community[v] { spec.p_in } else { spec.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let graph = ItemGraph::from_edges(spec.items, &edges)?;
    // each community owns a contiguous block of the vocabulary
    let block = (spec.vocab / spec.communities).max(1);
    let mut rows = Vec::with_capacity(spec.items);
    for (j, &c) in community.iter().enumerate() {
        let mut r = block_rng(child_seed(spec.seed, "relational-words"), 0, j as u64);
        let mut row = Vec::new();
        for b in 0..spec.vocab {
            let own = b / block == c || (c == spec.communities - 1 && b >= block * spec.communities);
            let share = if own { spec.purity / block as f64 } else { 0.0 } + (1.0 - spec.purity) / spec.vocab as f64;
            let rate = spec.words_per_item * share;
            let x = Poisson::new(rate).expect("positive rate").sample(&mut r) as u32;
            if x > 0 {
                row.push((b, x));
            }
        }
        rows.push(row);
    }
    let content = BagOfWords::new(spec.vocab, rows)?;
    let per_tag = spec.items_per_tag + spec.test_per_tag;
    let mut train = Vec::with_capacity(spec.tags);
    let mut test = Vec::with_capacity(spec.tags);
    for t in 0..spec.tags {
        let mut r = block_rng(child_seed(spec.seed, "relational-tags"), 0, t as u64);
        let c = t % spec.communities;
        let mut members: Vec<usize> = (0..spec.items).filter(|&j| community[j] == c).collect();
        members.shuffle(&mut r);
        members.truncate(per_tag);
        let split = members.len().saturating_sub(spec.test_per_tag);
        let (mut a, mut b) = (members[..split].to_vec(), members[split..].to_vec());
        a.sort_unstable();
        b.sort_unstable();
        train.push(a);
        test.push(b);
    }
    Ok(RelationalSynth {
        content,
        graph,
        community,
        train: ImplicitRatings::new(spec.items, train, 1.0, 0.01)?,
        test: ImplicitRatings::new(spec.items, test, 1.0, 0.01)?,
    })
}

/// Topic-model data from the deep Poisson factor analysis generator with a
/// one-layer topic-usage prior of constant logit `usage_logit`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicSynthSpec {
    pub docs: usize,
    pub vocab: usize,
    pub topics: usize,
    pub usage_logit: f64,
    pub hyper: PfaHyper,
    pub seed: u64,
}

impl Default for TopicSynthSpec {
    fn default() -> Self {
        TopicSynthSpec {
            docs: 200,
            vocab: 30,
            topics: 3,
            usage_logit: 0.5,
            hyper: recovery_hyper(),
            seed: 0,
        }
    }
}

/// Priors giving documents of roughly a hundred words with well separated
/// topics; used for the planted-recovery study.
pub fn recovery_hyper() -> PfaHyper {
    PfaHyper {
        a_phi: 0.3,
        e0: 20.0,
        f0: 2.0,
        a0: 18.0,
        b0: 2.0,
        ..PfaHyper::default()
    }
}

pub fn synth_topics(spec: &TopicSynthSpec) -> Result<(BagOfWords, PfaState)> {
    let sbn = SbnParams::new(vec![], vec![Array1::from_elem(spec.topics, spec.usage_logit)])?;
    let mut rng = block_rng(child_seed(spec.seed, "topics"), 0, 0);
    generate_synthetic(&spec.hyper, &sbn, spec.docs, spec.vocab, &mut rng)
}
