use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::corpus::ImplicitRatings;
use crate::error::{BdlError, Result};
use crate::net::{sgd_step, Hyperparams, Momentum, NetParams};
use crate::rng::{block_rng, child_seed};
use crate::scalar::Scalar;

use super::rank::{cdr_objective_term, update_item_cdr, update_user_cdr, PreferenceSet};
use super::{
    cdl_objective_terms, encode_rows, net_data_gradients, row_system, solve_row, LatentFactors,
};

/// How the perception and task components are coupled during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdlMode {
    /// Alternate coordinate sweeps and network updates on the full objective.
    Joint,
    /// `λ_n/λ_v → ∞`: train the SDAE alone first, then fit the factors
    /// against its frozen encoder.
    TwoStep,
    /// `λ_n/λ_v → 0`: the decoder drops out and the encoder is trained only
    /// toward the item factors.
    DecoderFree,
}

impl CdlMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "joint" => Some(CdlMode::Joint),
            "two-step" => Some(CdlMode::TwoStep),
            "decoder-free" => Some(CdlMode::DecoderFree),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CdlMode::Joint => "joint",
            CdlMode::TwoStep => "two-step",
            CdlMode::DecoderFree => "decoder-free",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdlOptions {
    pub epochs: usize,
    /// SGD passes over all items per epoch.
    pub net_passes: usize,
    pub mode: CdlMode,
    pub seed: u64,
    /// Replace the rating term with the pairwise ranking term, sampling at
    /// most this many pairs per user per epoch.
    pub ranking_pairs: Option<usize>,
    pub init_std: f64,
}

impl Default for CdlOptions {
    fn default() -> Self {
        CdlOptions {
            epochs: 20,
            net_passes: 5,
            mode: CdlMode::Joint,
            seed: 0,
            ranking_pairs: None,
            init_std: 0.1,
        }
    }
}

/// Clean content `X_c`, corrupted input `X_0` and training ratings.
#[derive(Debug, Clone)]
pub struct CdlData<T> {
    pub x0: Array2<T>,
    pub xc: Array2<T>,
    pub ratings: ImplicitRatings,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord<T> {
    pub epoch: usize,
    /// Objective before the U,V sweep.
    pub before_sweep: T,
    /// Objective after the U,V sweep.
    pub after_sweep: T,
    /// Objective at the end of the epoch (after the network update).
    pub objective: T,
}

#[derive(Debug, Clone)]
pub struct CdlModel<T> {
    pub params: NetParams<T>,
    pub factors: LatentFactors<T>,
    pub trace: Vec<EpochRecord<T>>,
}

pub fn train_cdl<T: Scalar>(
    data: &CdlData<T>,
    params: NetParams<T>,
    hyper: &Hyperparams<T>,
    opts: &CdlOptions,
) -> Result<CdlModel<T>> {
    train_cdl_observed(data, params, hyper, opts, &mut |_, _, _| {})
}

/// Like [`train_cdl`], calling `observer` after every epoch.
pub fn train_cdl_observed<T: Scalar>(
    data: &CdlData<T>,
    mut params: NetParams<T>,
    hyper: &Hyperparams<T>,
    opts: &CdlOptions,
    observer: &mut dyn FnMut(&EpochRecord<T>, &NetParams<T>, &LatentFactors<T>),
) -> Result<CdlModel<T>> {
    hyper.validate()?;
    let n_items = data.ratings.n_items();
    if data.x0.nrows() != n_items || data.xc.raw_dim() != data.x0.raw_dim() {
        return Err(BdlError::dim("content rows must match rating items"));
    }
    let k = params.latent_width();
    let mut init_rng = block_rng(child_seed(opts.seed, "cdl-init"), 0, 0);
    let u = Array2::from_shape_simple_fn((data.ratings.n_users(), k), || {
        let z: f64 = init_rng.sample(StandardNormal);
        T::of(z * opts.init_std)
    });
    let net_seed = child_seed(opts.seed, "cdl-net");
    let mut momentum = Momentum::new(&params);

    if opts.mode == CdlMode::TwoStep {
        for pass in 0..opts.epochs * opts.net_passes {
            net_pass(data.x0.view(), data.xc.view(), &mut params, None, &mut momentum, hyper, T::zero(), hyper.lambda_n, net_seed, pass as u64)?;
        }
    }
    let v = encode_rows(data.x0.view(), &params)?;
    let mut factors = LatentFactors { u, v };

    let (net_lambda_v, net_lambda_n) = match opts.mode {
        CdlMode::Joint => (hyper.lambda_v, hyper.lambda_n),
        CdlMode::DecoderFree => (hyper.lambda_v, T::zero()),
        CdlMode::TwoStep => (T::zero(), T::zero()),
    };
    let eval_hyper = Hyperparams {
        lambda_n: if opts.mode == CdlMode::DecoderFree { T::zero() } else { hyper.lambda_n },
        ..*hyper
    };

    let mut trace = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let prefs = match opts.ranking_pairs {
            Some(max) => Some(PreferenceSet::sample(
                &data.ratings,
                max,
                T::one(),
                hyper.a,
                child_seed(opts.seed, "cdr-pairs"),
                epoch as u64,
            )?),
            None => None,
        };
        let objective = |params: &NetParams<T>, f: &LatentFactors<T>| -> Result<T> {
            let terms = cdl_objective_terms(
                f.u.view(),
                f.v.view(),
                params,
                data.x0.view(),
                data.xc.view(),
                &data.ratings,
                &eval_hyper,
            )?;
            let value = match &prefs {
                Some(p) => terms.total() - terms.ratings + cdr_objective_term(f.u.view(), f.v.view(), p),
                None => terms.total(),
            };
            if !value.is_finite() {
                return Err(BdlError::numeric(format!("objective diverged at epoch {}", epoch)));
            }
            Ok(value)
        };

        let before_sweep = objective(&params, &factors)?;
        let encoded = encode_rows(data.x0.view(), &params)?;
        match &prefs {
            Some(p) => sweep_ranking(&mut factors, &encoded, p, hyper)?,
            None => sweep(&mut factors, &encoded, &data.ratings, hyper)?,
        }
        let after_sweep = objective(&params, &factors)?;
        let tol = sweep_tolerance(before_sweep);
        if after_sweep < before_sweep - tol {
            return Err(BdlError::numeric(format!(
                "coordinate sweep decreased the objective at epoch {} ({} -> {})",
                epoch, before_sweep, after_sweep
            )));
        }

        if opts.mode != CdlMode::TwoStep {
            for pass in 0..opts.net_passes {
                net_pass(
                    data.x0.view(),
                    data.xc.view(),
                    &mut params,
                    Some(factors.v.view()),
                    &mut momentum,
                    hyper,
                    net_lambda_v,
                    net_lambda_n,
                    net_seed,
                    (epoch * opts.net_passes + pass) as u64,
                )?;
            }
        }
        let record = EpochRecord {
            epoch,
            before_sweep,
            after_sweep,
            objective: objective(&params, &factors)?,
        };
        log::debug!(
            "cdl epoch {}: sweep {} -> {}, end {}",
            epoch,
            record.before_sweep,
            record.after_sweep,
            record.objective
        );
        observer(&record, &params, &factors);
        trace.push(record);
    }
    Ok(CdlModel {
        params,
        factors,
        trace,
    })
}

/// Plain SDAE training: `passes` shuffled mini-batch passes on the
/// reconstruction loss `λ_n/2 ‖f_r(X_0) − X_c‖²` with weight decay.
pub fn train_sdae<T: Scalar>(
    x0: ArrayView2<'_, T>,
    xc: ArrayView2<'_, T>,
    mut params: NetParams<T>,
    hyper: &Hyperparams<T>,
    passes: usize,
    seed: u64,
) -> Result<NetParams<T>> {
    hyper.validate()?;
    if x0.raw_dim() != xc.raw_dim() {
        return Err(BdlError::dim("corrupted and clean content differ in shape"));
    }
    let mut momentum = Momentum::new(&params);
    let net_seed = child_seed(seed, "sdae");
    for pass in 0..passes {
        net_pass(x0, xc, &mut params, None, &mut momentum, hyper, T::zero(), hyper.lambda_n, net_seed, pass as u64)?;
    }
    Ok(params)
}

pub(crate) fn sweep_tolerance<T: Scalar>(reference: T) -> T {
    let rel = T::of(1e-9).max(T::epsilon() * T::of(64.0));
    rel * (T::one() + reference.abs())
}

/// Full U sweep followed by a full V sweep; rows within a sweep are solved
/// independently and in parallel.
pub(crate) fn sweep<T: Scalar>(
    factors: &mut LatentFactors<T>,
    encoded: &Array2<T>,
    ratings: &ImplicitRatings,
    hyper: &Hyperparams<T>,
) -> Result<()> {
    let a = T::of(ratings.a());
    let b = T::of(ratings.b());
    let gram_v = factors.v.t().dot(&factors.v);
    let v = factors.v.view();
    let rows: Vec<Array1<T>> = (0..ratings.n_users())
        .into_par_iter()
        .map(|i| {
            let (p, r) = row_system(gram_v.view(), v, ratings.user(i), a, b, hyper.lambda_u, None);
            solve_row(p, r)
        })
        .collect::<Result<_>>()?;
    assign_rows(&mut factors.u, rows);

    let gram_u = factors.u.t().dot(&factors.u);
    let by_item = ratings.by_item();
    let u = factors.u.view();
    let rows: Vec<Array1<T>> = (0..ratings.n_items())
        .into_par_iter()
        .map(|j| {
            let (p, r) = row_system(
                gram_u.view(),
                u,
                &by_item[j],
                a,
                b,
                hyper.lambda_v,
                Some(encoded.row(j)),
            );
            solve_row(p, r)
        })
        .collect::<Result<_>>()?;
    assign_rows(&mut factors.v, rows);
    Ok(())
}

fn sweep_ranking<T: Scalar>(
    factors: &mut LatentFactors<T>,
    encoded: &Array2<T>,
    prefs: &PreferenceSet<T>,
    hyper: &Hyperparams<T>,
) -> Result<()> {
    let v = factors.v.view();
    let rows: Vec<Array1<T>> = (0..prefs.n_users())
        .into_par_iter()
        .map(|i| update_user_cdr(i, v, prefs, hyper.lambda_u))
        .collect::<Result<_>>()?;
    assign_rows(&mut factors.u, rows);
    // items share pairs, so this half is Gauss-Seidel
    let involvement = prefs.by_item(factors.v.nrows());
    for j in 0..factors.v.nrows() {
        let row = update_item_cdr(
            factors.u.view(),
            factors.v.view(),
            &involvement[j],
            prefs,
            hyper.lambda_v,
            encoded.row(j),
        )?;
        factors.v.row_mut(j).assign(&row);
    }
    Ok(())
}

fn assign_rows<T: Scalar>(m: &mut Array2<T>, rows: Vec<Array1<T>>) {
    for (mut dst, src) in m.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&src);
    }
}

/// One shuffled mini-batch pass of momentum SGD on the network part of the
/// per-item loss `−L / J`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn net_pass<T: Scalar>(
    x0: ArrayView2<'_, T>,
    xc: ArrayView2<'_, T>,
    params: &mut NetParams<T>,
    targets: Option<ArrayView2<'_, T>>,
    momentum: &mut Momentum<T>,
    hyper: &Hyperparams<T>,
    lambda_v: T,
    lambda_n: T,
    seed: u64,
    pass: u64,
) -> Result<()> {
    let n = x0.nrows();
    if n == 0 {
        return Ok(());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut block_rng(seed, pass, 0));
    let zeros;
    let targets = match targets {
        Some(t) => t,
        None => {
            zeros = Array2::<T>::zeros((n, params.latent_width()));
            zeros.view()
        }
    };
    let decay = hyper.lambda_w / T::of_usize(n);
    for batch in order.chunks(hyper.batch_size) {
        let bx0 = x0.select(Axis(0), batch);
        let bxc = xc.select(Axis(0), batch);
        let v = targets.select(Axis(0), batch);
        let mut g = net_data_gradients(params, bx0.view(), bxc.view(), v.view(), lambda_v, lambda_n)?;
        g.scale(T::one() / T::of_usize(batch.len()));
        g.add_weight_decay(params, decay);
        sgd_step(params, &g, momentum, hyper.learning_rate, hyper.momentum)
            .map_err(|e| e.context(format!("network pass {}", pass)))?;
    }
    Ok(())
}
