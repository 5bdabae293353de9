use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize};

use super::features::FeatureTensor;
use super::heatmap::{Heatmap, ANGLE_BINS, DIST_BINS};
use super::WaypointError;
use crate::learnkit::{Adam, AdamConfig, Mlp, Params};
use crate::rng::{substream, Rng};

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Shared two-layer network applied to a circular window of feature rows
/// around each angle bin, producing that bin's 12 distance logits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaypointPredictor {
    window: usize,
    in_features: usize,
    net: Mlp,
}

impl<'de> Deserialize<'de> for WaypointPredictor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            window: usize,
            in_features: usize,
            net: Mlp,
        }
        let r = Raw::deserialize(d)?;
        WaypointPredictor::from_parts(r.window, r.in_features, r.net).map_err(serde::de::Error::custom)
    }
}

impl WaypointPredictor {
    pub fn new(in_features: usize, window: usize, hidden: usize, rng: &mut Rng) -> Result<Self, WaypointError> {
        Self::check_window(window)?;
        Ok(Self { window, in_features, net: Mlp::new(&[window * in_features, hidden, DIST_BINS], rng) })
    }

    pub fn zeros(in_features: usize, window: usize, hidden: usize) -> Result<Self, WaypointError> {
        Self::check_window(window)?;
        Ok(Self { window, in_features, net: Mlp::zeros(&[window * in_features, hidden, DIST_BINS]) })
    }

    pub fn from_parts(window: usize, in_features: usize, net: Mlp) -> Result<Self, WaypointError> {
        Self::check_window(window)?;
        if net.input_dim() != window * in_features || net.output_dim() != DIST_BINS {
            return Err(WaypointError::Shape(format!(
                "network maps {} -> {}, expected {} -> {DIST_BINS}",
                net.input_dim(),
                net.output_dim(),
                window * in_features
            )));
        }
        Ok(Self { window, in_features, net })
    }

    fn check_window(window: usize) -> Result<(), WaypointError> {
        if window.is_multiple_of(2) || window > ANGLE_BINS {
            return Err(WaypointError::Invalid(format!("window {window} must be odd and at most {ANGLE_BINS}")));
        }
        Ok(())
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    fn window_input(&self, feats: &FeatureTensor, a: usize) -> Vec<f64> {
        let half = self.window / 2;
        let mut x = Vec::with_capacity(self.window * self.in_features);
        for k in 0..self.window {
            x.extend_from_slice(feats.row((a + ANGLE_BINS + k - half) % ANGLE_BINS));
        }
        x
    }

    fn check_input(&self, feats: &FeatureTensor) -> Result<(), WaypointError> {
        if feats.cols != self.in_features || feats.data.len() != ANGLE_BINS * feats.cols {
            return Err(WaypointError::Shape(format!(
                "features have {} columns, predictor expects {}",
                feats.cols, self.in_features
            )));
        }
        Ok(())
    }

    /// Sigmoid scores per bin.
    pub fn predict(&self, feats: &FeatureTensor) -> Result<Heatmap, WaypointError> {
        if !self.net.all_finite() {
            return Err(WaypointError::NonFiniteParams);
        }
        self.check_input(feats)?;
        let mut scores = Vec::with_capacity(ANGLE_BINS * DIST_BINS);
        for a in 0..ANGLE_BINS {
            scores.extend(self.net.infer(&self.window_input(feats, a))?.into_iter().map(sigmoid));
        }
        Heatmap::from_scores(scores)
    }

    /// Mean per-bin squared error over the samples and its gradient.
    pub fn loss_and_grad(&self, samples: &[(&FeatureTensor, &Heatmap)]) -> Result<(f64, Mlp), WaypointError> {
        let mut grad = self.net.zeros_like();
        let n = (samples.len() * ANGLE_BINS * DIST_BINS) as f64;
        let mut total = 0.0;
        for (feats, gt) in samples {
            self.check_input(feats)?;
            for a in 0..ANGLE_BINS {
                let (z, cache) = self.net.forward(&self.window_input(feats, a))?;
                let mut dz = vec![0.0; DIST_BINS];
                for d in 0..DIST_BINS {
                    let p = sigmoid(z[d]);
                    let r = p - gt.get(a, d);
                    total += r * r;
                    dz[d] = 2.0 * r / n * p * (1.0 - p);
                }
                self.net.backward(&cache, &dz, &mut grad)?;
            }
        }
        Ok((total / n, grad))
    }

    pub fn mse(&self, corpus: &[(FeatureTensor, Heatmap)]) -> Result<f64, WaypointError> {
        let mut total = 0.0;
        for (f, gt) in corpus {
            total += self.predict(f)?.mse(gt);
        }
        Ok(total / corpus.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: usize,
    pub window: usize,
    pub seed: u64,
    /// Record training-set MSE after every batch of the first epoch.
    pub trace_first_epoch: bool,
}

impl Default for PredictorHyper {
    fn default() -> Self {
        Self { epochs: 20, batch_size: 8, lr: 3e-3, hidden: 32, window: 5, seed: 0, trace_first_epoch: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    /// Training-set MSE before training, then after each epoch.
    pub epoch_mse: Vec<f64>,
    /// Training-set MSE before training, then after each first-epoch batch.
    pub first_epoch_trace: Vec<f64>,
}

/// Mini-batch Adam on per-bin MSE. Deterministic given `hyper.seed`.
pub fn train_predictor(
    corpus: &[(FeatureTensor, Heatmap)],
    hyper: &PredictorHyper,
) -> Result<(WaypointPredictor, TrainReport), WaypointError> {
    let first = corpus.first().ok_or(WaypointError::EmptyCorpus)?;
    if hyper.batch_size == 0 {
        return Err(WaypointError::Invalid("batch size must be positive".into()));
    }
    let mut init = substream(hyper.seed, "init");
    let mut model = WaypointPredictor::new(first.0.cols, hyper.window, hyper.hidden, &mut init)?;
    let mut shuffle = substream(hyper.seed, "wp-shuffle");
    let mut opt = Adam::new(AdamConfig { lr: hyper.lr, ..Default::default() }, model.net.num_params());
    let mut report = TrainReport::default();
    let initial = model.mse(corpus)?;
    report.epoch_mse.push(initial);
    if hyper.trace_first_epoch {
        report.first_epoch_trace.push(initial);
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut shuffle);
        for (step, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let batch: Vec<(&FeatureTensor, &Heatmap)> = chunk.iter().map(|&i| (&corpus[i].0, &corpus[i].1)).collect();
            let (loss, grad) = model.loss_and_grad(&batch)?;
            if !loss.is_finite() {
                return Err(WaypointError::Divergence { epoch, step });
            }
            opt.update(&mut model.net, &grad).map_err(|_| WaypointError::Divergence { epoch, step })?;
            if epoch == 0 && hyper.trace_first_epoch {
                report.first_epoch_trace.push(model.mse(corpus)?);
            }
        }
        let mse = model.mse(corpus)?;
        if !mse.is_finite() {
            return Err(WaypointError::Divergence { epoch, step: order.len().div_ceil(hyper.batch_size) });
        }
        report.epoch_mse.push(mse);
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learnkit::grad_check;
    use crate::rng::substream;
    use crate::waypoint::heatmap_from_bins;
    use crate::waypoint::KernelParams;
    use rand::Rng as _;

    fn random_feats(rng: &mut Rng, cols: usize) -> FeatureTensor {
        FeatureTensor { cols, data: (0..ANGLE_BINS * cols).map(|_| rng.gen_range(0.0..1.0)).collect() }
    }

    #[test]
    fn zero_weights_give_half() {
        let p = WaypointPredictor::zeros(6, 5, 4).unwrap();
        let hm = p.predict(&FeatureTensor { cols: 6, data: vec![0.3; 720] }).unwrap();
        assert!(hm.scores().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn rotation_equivariance() {
        let mut rng = substream(61, "t");
        let p = WaypointPredictor::new(6, 5, 8, &mut rng).unwrap();
        let f = random_feats(&mut rng, 6);
        let base = p.predict(&f).unwrap();
        for k in [1, 3, 11] {
            assert_eq!(p.predict(&f.rotated(10 * k)).unwrap(), base.rotated(10 * k));
        }
    }

    #[test]
    fn non_finite_and_shape_errors() {
        let mut p = WaypointPredictor::zeros(6, 5, 4).unwrap();
        assert!(p.predict(&FeatureTensor { cols: 5, data: vec![0.0; 600] }).is_err());
        p.net_mut().visit_mut(&mut |b| b[0] = f64::NAN);
        assert_eq!(
            p.predict(&FeatureTensor { cols: 6, data: vec![0.0; 720] }).unwrap_err(),
            WaypointError::NonFiniteParams
        );
        assert!(WaypointPredictor::zeros(6, 4, 4).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = substream(62, "t");
        let p = WaypointPredictor::new(3, 3, 4, &mut rng).unwrap();
        let f = random_feats(&mut rng, 3);
        let gt = heatmap_from_bins(&[(10, 4), (70, 9)], &KernelParams::default());
        let err = grad_check(
            p.net(),
            |net: &Mlp| {
                let q = WaypointPredictor::from_parts(3, 3, net.clone()).unwrap();
                q.loss_and_grad(&[(&f, &gt)]).unwrap()
            },
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    fn tiny_corpus(n: usize, seed: u64) -> Vec<(FeatureTensor, Heatmap)> {
        let mut rng = substream(seed, "corpus");
        (0..n)
            .map(|_| {
                let a = rng.gen_range(0..ANGLE_BINS);
                let d = rng.gen_range(0..DIST_BINS);
                let mut f = FeatureTensor { cols: 2, data: vec![0.0; ANGLE_BINS * 2] };
                f.data[a * 2] = 1.0;
                f.data[a * 2 + 1] = d as f64 / 11.0;
                (f, heatmap_from_bins(&[(a, d)], &KernelParams::default()))
            })
            .collect()
    }

    fn real_pair() -> (FeatureTensor, Heatmap) {
        use crate::waypoint::{collect_samples, features, ObstacleMask};
        use crate::world::{build_nav_graph, gen_world, WorldParams};
        let grid = gen_world(7, &WorldParams::default()).unwrap();
        let graph = build_nav_graph(&grid, 2.0).unwrap();
        let samples = collect_samples(&grid, &graph, "m", 7, 3.0, &KernelParams::default()).unwrap();
        let s = samples.iter().max_by_key(|s| s.target.len()).unwrap();
        (features(&s.panorama, &ObstacleMask::ones(&s.panorama), &grid).unwrap(), s.gt.clone())
    }

    #[test]
    fn overfits_one_pair() {
        let corpus = vec![real_pair()];
        let hyper = PredictorHyper { epochs: 2000, batch_size: 1, lr: 1e-2, ..Default::default() };
        let (_, report) = train_predictor(&corpus, &hyper).unwrap();
        assert!(*report.epoch_mse.last().unwrap() < 1e-3, "{:?}", report.epoch_mse.last());
    }

    #[test]
    fn zero_lr_keeps_init_and_seed_is_deterministic() {
        let corpus = tiny_corpus(5, 2);
        let hyper = PredictorHyper { epochs: 2, lr: 0.0, ..Default::default() };
        let (p, _) = train_predictor(&corpus, &hyper).unwrap();
        let fresh = WaypointPredictor::new(2, 5, 32, &mut substream(0, "init")).unwrap();
        assert_eq!(p, fresh);

        let hyper = PredictorHyper { epochs: 2, seed: 9, ..Default::default() };
        let a = train_predictor(&corpus, &hyper).unwrap();
        let b = train_predictor(&corpus, &hyper).unwrap();
        assert_eq!(serde_json::to_string(&a.0).unwrap(), serde_json::to_string(&b.0).unwrap());
        assert_eq!(a.1, b.1);
        assert_eq!(train_predictor(&[], &hyper).unwrap_err(), WaypointError::EmptyCorpus);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = substream(63, "t");
        let p = WaypointPredictor::new(4, 5, 6, &mut rng).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: WaypointPredictor = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let bad = json.replace("\"window\":5", "\"window\":3");
        assert!(serde_json::from_str::<WaypointPredictor>(&bad).is_err());
    }
}
