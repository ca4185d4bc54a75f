use super::denoiser::DenoiserModel;
use crate::numerics::{ComplexImage, SeededRng};
use crate::sde::{NoiseSchedule, StateValue};
use crate::{Error, Result};

/// Adam settings for denoising score matching. The loss weight is fixed to
/// the kernel variance `sigma_i^2 - sigma_0^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 8,
            iterations: 400,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::Parameter(format!(
                "Adam betas must lie in (0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::Parameter("learning rate and batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: DenoiserModel,
    /// Mini-batch loss per iteration.
    pub loss_history: Vec<f64>,
}

/// Fits the model's data statistics, then runs Adam on the DSM loss over
/// mini-batches drawn with replacement. Parameters are rounded to f32 at the
/// end so the returned model equals its checkpoint.
pub fn train(
    mut model: DenoiserModel,
    dataset: &[ComplexImage],
    cfg: &TrainConfig,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Parameter("empty training set".into()));
    }
    let repr = model.architecture().representation;
    let data: Vec<StateValue> = dataset.iter().map(|k| repr.encode(k)).collect::<Result<_>>()?;
    model.fit_stats(&data)?;

    let n = model.params().len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for it in 0..cfg.iterations {
        batch.clear();
        for _ in 0..cfg.batch_size {
            batch.push(data[rng.below(data.len())].clone());
        }
        let (loss, grad) = model.loss_and_grad(&batch, sched, rng)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("training diverged at iteration {it}")));
        }
        history.push(loss);
        let t = (it + 1) as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((p, g), m), v) in model.params_mut().iter_mut().zip(&grad).zip(&mut m).zip(&mut v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
        }
    }
    model.set_schedule(sched.clone());
    model.quantize();
    Ok(TrainOutcome { model, loss_history: history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{dsm_loss, Architecture, Representation, Skip};
    use num_complex::Complex64;

    #[test]
    fn rejects_bad_config() {
        let arch = Architecture::new(Representation::Full, (4, 4), 4, 2, Skip::None).unwrap();
        let model = DenoiserModel::new(arch, &mut SeededRng::new(0)).unwrap();
        let sched = NoiseSchedule::new(0.01, 10.0, 20, 20).unwrap();
        let data = vec![ComplexImage::zeros(4, 4).unwrap()];
        let bad = TrainConfig { beta1: 1.0, ..TrainConfig::default() };
        assert!(train(model.clone(), &data, &bad, &sched, &mut SeededRng::new(0)).is_err());
        let cfg = TrainConfig::default();
        assert!(train(model, &[], &cfg, &sched, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn constant_image_loss_decreases_and_is_deterministic() {
        let arch = Architecture::new(Representation::Full, (8, 8), 8, 3, Skip::None).unwrap();
        let model = DenoiserModel::new(arch, &mut SeededRng::new(1)).unwrap();
        let sched = NoiseSchedule::new(0.01, 20.0, 100, 100).unwrap();
        let data = vec![ComplexImage::filled(8, 8, Complex64::new(0.7, 0.0)).unwrap()];
        let cfg = TrainConfig { iterations: 200, batch_size: 4, ..TrainConfig::default() };
        let a = train(model.clone(), &data, &cfg, &sched, &mut SeededRng::new(2)).unwrap();
        let b = train(model.clone(), &data, &cfg, &sched, &mut SeededRng::new(2)).unwrap();
        assert_eq!(a.model.params(), b.model.params());

        let mut fitted = model.clone();
        let enc: Vec<StateValue> = data.iter().map(|k| Representation::Full.encode(k).unwrap()).collect();
        fitted.fit_stats(&enc).unwrap();
        let eval = vec![enc[0].clone(); 64];
        let before = dsm_loss(&fitted, &eval, &sched, &mut SeededRng::new(3)).unwrap();
        let after = dsm_loss(&a.model, &eval, &sched, &mut SeededRng::new(3)).unwrap();
        assert!(after < before, "loss {before} -> {after}");
    }
}
