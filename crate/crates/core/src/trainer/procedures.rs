use serde::{Deserialize, Serialize};

use super::{fit, DriveData, ImageSet, Metrics, Objective, Split, TrainConfig, TrainOutcome};
use crate::diffcore::ops::elementwise_mul_backward;
use crate::diffcore::{action_mse, attention_sparsity, cosine_loss, elementwise_mul, Gradients, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::gazeprep::SaliencyDataset;
use crate::nets::{
    normalize_map, upsample_map, AgentSpec, ArchSpec, Checkpoint, CheckpointMeta, Net, Net1Spec, RoadSalSpec,
};

const PIPELINE_CHUNK: usize = 16;

/// How an agent's input frame is prepared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    /// Frames as rendered.
    Raw,
    /// Frames times the normalized, upsampled RoadSal map.
    RoadSal,
    /// Frames times the Net1 attention map.
    Net1,
}

impl std::str::FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(PipelineKind::Raw),
            "roadsal" => Ok(PipelineKind::RoadSal),
            "net1" => Ok(PipelineKind::Net1),
            other => Err(Error::invalid(format!("unknown pipeline {other:?} (expected raw|roadsal|net1)"))),
        }
    }
}

impl PipelineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::Raw => "raw",
            PipelineKind::RoadSal => "roadsal",
            PipelineKind::Net1 => "net1",
        }
    }
}

/// An input pipeline bound to its (frozen) attention network.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub kind: PipelineKind,
    attention: Option<(Net, ParamSet<f32>)>,
}

impl Pipeline {
    pub fn raw() -> Self {
        Pipeline {
            kind: PipelineKind::Raw,
            attention: None,
        }
    }

    /// Binds `kind` to `attention`, checking that the checkpoint is the right
    /// kind of network for `input`-sized frames.
    pub fn new(kind: PipelineKind, attention: Option<&Checkpoint>, input: usize) -> Result<Self> {
        let ckpt = match (kind, attention) {
            (PipelineKind::Raw, _) => return Ok(Pipeline::raw()),
            (_, None) => {
                return Err(Error::invalid(format!(
                    "pipeline {} needs an attention checkpoint",
                    kind.as_str()
                )))
            }
            (_, Some(c)) => c,
        };
        let size = match (&kind, &ckpt.spec) {
            (PipelineKind::RoadSal, ArchSpec::RoadSal(s)) => s.input,
            (PipelineKind::Net1, ArchSpec::Net1(s)) => s.input,
            _ => {
                return Err(Error::invalid(format!(
                    "pipeline {} cannot use a {} checkpoint",
                    kind.as_str(),
                    ckpt.spec.kind()
                )))
            }
        };
        if size != input {
            return Err(Error::invalid(format!(
                "attention network takes {size}px frames but the agent takes {input}px"
            )));
        }
        let net = ckpt.net()?;
        net.check_params(&ckpt.params)?;
        Ok(Pipeline {
            kind,
            attention: Some((net, ckpt.params.clone())),
        })
    }

    /// `N x H x W` maps in `[0, 1]` for an `N x H x W x 3` batch; `None` for raw frames.
    pub fn maps(&self, batch: &Tensor<f32>) -> Result<Option<Tensor<f32>>> {
        let Some((net, params)) = &self.attention else {
            return Ok(None);
        };
        let (n, h, w) = match *batch.shape() {
            [n, h, w, _] => (n, h, w),
            _ => return Err(Error::shape("pipeline", &[0, 0, 0, 3], batch.shape())),
        };
        let out = net.forward(params, batch)?;
        let maps = match self.kind {
            PipelineKind::RoadSal => {
                let side = (out.len() / n.max(1)) as f64;
                let side = side.sqrt().round() as usize;
                let mut data = Vec::with_capacity(n * h * w);
                for raw in out.data().chunks_exact(side * side) {
                    let norm = normalize_map(&Tensor::new(vec![side, side], raw.to_vec())?);
                    data.extend(upsample_map(&norm, h, w)?.into_data());
                }
                Tensor::new(vec![n, h, w], data)?
            }
            _ => out.reshape(vec![n, h, w])?,
        };
        Ok(Some(maps))
    }

    /// The batch with each frame multiplied by its map.
    pub fn apply_batch(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        match self.maps(batch)? {
            None => Ok(batch.clone()),
            Some(m) => elementwise_mul(batch, &m),
        }
    }

    pub fn apply(&self, images: &ImageSet) -> Result<ImageSet> {
        if self.attention.is_none() {
            return Ok(images.clone());
        }
        let mut out = ImageSet::new(images.shape());
        let idx: Vec<usize> = (0..images.len()).collect();
        let [h, w, c] = images.shape();
        for chunk in idx.chunks(PIPELINE_CHUNK) {
            let batch = self.apply_batch(&images.gather(chunk))?;
            for img in batch.data().chunks_exact(h * w * c) {
                out.push(&Tensor::new(vec![h, w, c], img.to_vec())?)?;
            }
        }
        Ok(out)
    }

    pub fn apply_data(&self, data: &DriveData) -> Result<DriveData> {
        Ok(DriveData {
            images: self.apply(&data.images)?,
            actions: data.actions.clone(),
        })
    }
}

fn meta(label: &str, cfg: &TrainConfig) -> CheckpointMeta {
    CheckpointMeta {
        label: label.into(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
    }
}

// ---------------------------------------------------------------------------
// RoadSal

struct SaliencySet {
    images: ImageSet,
    targets: Vec<Vec<f32>>,
}

struct RoadSalObjective {
    net: Net,
    train: SaliencySet,
    heldout: SaliencySet,
}

impl RoadSalObjective {
    fn set(&self, split: Split) -> &SaliencySet {
        match split {
            Split::Train => &self.train,
            Split::Heldout => &self.heldout,
        }
    }
}

impl Objective for RoadSalObjective {
    fn len(&self, split: Split) -> usize {
        self.set(split).targets.len()
    }

    fn eval(
        &self,
        params: &ParamSet<f32>,
        split: Split,
        idx: &[usize],
        grads: Option<&mut Gradients<f32>>,
        _metrics: &mut Metrics,
    ) -> Result<f64> {
        let set = self.set(split);
        let x = set.images.gather(idx);
        let (y, trace) = if grads.is_some() {
            let (y, t) = self.net.forward_trace(params, &x)?;
            (y, Some(t))
        } else {
            (self.net.forward(params, &x)?, None)
        };
        let m = y.len() / idx.len();
        let mut sum = 0.0;
        let mut gy = Vec::with_capacity(y.len());
        for (pred, &i) in y.data().chunks_exact(m).zip(idx) {
            let s = cosine_loss(pred, &set.targets[i])?;
            sum += s.value as f64;
            gy.extend(s.grad);
        }
        if let (Some(grads), Some(trace)) = (grads, trace) {
            let gy = Tensor::new(y.shape().to_vec(), gy)?;
            self.net.backward(params, trace, &gy, Some(grads), false)?;
        }
        Ok(sum)
    }
}

fn saliency_set<'a>(
    samples: impl Iterator<Item = &'a crate::gazeprep::SaliencySample>,
    spec: &RoadSalSpec,
) -> Result<SaliencySet> {
    let mut images = ImageSet::new([spec.input, spec.input, 3]);
    let mut targets = Vec::new();
    let side = spec.output_side();
    for s in samples {
        if s.frame.width != spec.input || s.frame.height != spec.input {
            return Err(Error::invalid(format!(
                "sample {} has a {}x{} frame, RoadSal takes {}",
                s.info.id, s.frame.width, s.frame.height, spec.input
            )));
        }
        if s.target.len() != side * side {
            return Err(Error::invalid(format!(
                "sample {} target has {} values, RoadSal emits {side}x{side}",
                s.info.id,
                s.target.len()
            )));
        }
        images.push(&s.frame.to_tensor())?;
        targets.push(s.target_values());
    }
    Ok(SaliencySet { images, targets })
}

/// Supervised RoadSal training on the dataset's train split, with its test
/// split as the held-out curve.
pub fn train_roadsal(dataset: &SaliencyDataset, spec: &RoadSalSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let net = Net::new(ArchSpec::RoadSal(spec.clone()))?;
    let obj = RoadSalObjective {
        train: saliency_set(dataset.train_samples(), spec)?,
        heldout: saliency_set(dataset.test_samples(), spec)?,
        net,
    };
    let mut params = obj.net.init_params(cfg.seed);
    let report = fit("roadsal", &obj, &mut params, cfg)?;
    Ok(TrainOutcome {
        report,
        checkpoint: Checkpoint {
            spec: obj.net.spec.clone(),
            params,
            meta: meta("roadsal", cfg),
        },
    })
}

// ---------------------------------------------------------------------------
// Driving agents

struct DriverObjective<'a> {
    net: &'a Net,
    train: &'a DriveData,
    heldout: Option<&'a DriveData>,
}

impl DriverObjective<'_> {
    fn data(&self, split: Split) -> Option<&DriveData> {
        match split {
            Split::Train => Some(self.train),
            Split::Heldout => self.heldout,
        }
    }
}

fn mse_terms(pred: &[f32], truth: &[f32; 3]) -> (f64, Vec<f32>) {
    let s = action_mse(&[pred[0], pred[1], pred[2]], truth);
    (s.value as f64, s.grad)
}

impl Objective for DriverObjective<'_> {
    fn len(&self, split: Split) -> usize {
        self.data(split).map_or(0, |d| d.len())
    }

    fn eval(
        &self,
        params: &ParamSet<f32>,
        split: Split,
        idx: &[usize],
        grads: Option<&mut Gradients<f32>>,
        _metrics: &mut Metrics,
    ) -> Result<f64> {
        let data = self.data(split).expect("eval is only called on non-empty splits");
        let x = data.images.gather(idx);
        let mut sum = 0.0;
        match grads {
            None => {
                let y = self.net.forward(params, &x)?;
                for (pred, &i) in y.data().chunks_exact(3).zip(idx) {
                    sum += mse_terms(pred, &data.actions[i]).0;
                }
            }
            Some(grads) => {
                let (y, trace) = self.net.forward_trace(params, &x)?;
                let mut gy = Vec::with_capacity(y.len());
                for (pred, &i) in y.data().chunks_exact(3).zip(idx) {
                    let (v, g) = mse_terms(pred, &data.actions[i]);
                    sum += v;
                    gy.extend(g);
                }
                let gy = Tensor::new(y.shape().to_vec(), gy)?;
                self.net.backward(params, trace, &gy, Some(grads), false)?;
            }
        }
        Ok(sum)
    }
}

fn check_side(data: &DriveData, input: usize, what: &str) -> Result<()> {
    let [h, w, c] = data.images.shape();
    if [h, w, c] != [input, input, 3] {
        return Err(Error::invalid(format!(
            "{what} frames are {h}x{w}x{c}, the network takes {input}x{input}x3"
        )));
    }
    Ok(())
}

/// Behavioral cloning of the oracle's actions from frames.
pub fn train_driver(
    train: &DriveData,
    heldout: Option<&DriveData>,
    spec: &AgentSpec,
    cfg: &TrainConfig,
    label: &str,
) -> Result<TrainOutcome> {
    let net = Net::new(ArchSpec::Agent(spec.clone()))?;
    check_side(train, spec.input, "training")?;
    if let Some(h) = heldout {
        check_side(h, spec.input, "held-out")?;
    }
    let obj = DriverObjective {
        net: &net,
        train,
        heldout: heldout.filter(|h| !h.is_empty()),
    };
    let mut params = net.init_params(cfg.seed);
    let report = fit(label, &obj, &mut params, cfg)?;
    Ok(TrainOutcome {
        report,
        checkpoint: Checkpoint {
            spec: net.spec.clone(),
            params,
            meta: meta(label, cfg),
        },
    })
}

#[derive(Clone, Debug)]
pub struct AgentOutcomes {
    pub model1: TrainOutcome,
    pub model2: TrainOutcome,
    pub model3: TrainOutcome,
}

impl AgentOutcomes {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, PipelineKind, &TrainOutcome)> {
        [
            ("model1", PipelineKind::Raw, &self.model1),
            ("model2", PipelineKind::RoadSal, &self.model2),
            ("model3", PipelineKind::Net1, &self.model3),
        ]
        .into_iter()
    }
}

/// Trains the three comparison agents under one spec, config and seed: on raw
/// frames, on RoadSal-weighted frames and on Net1-weighted frames. Attention
/// maps are computed once per frame up front.
pub fn train_agents(
    roadsal: &Checkpoint,
    net1: &Checkpoint,
    train: &DriveData,
    heldout: Option<&DriveData>,
    spec: &AgentSpec,
    cfg: &TrainConfig,
) -> Result<AgentOutcomes> {
    cfg.validate()?;
    let p2 = Pipeline::new(PipelineKind::RoadSal, Some(roadsal), spec.input)?;
    let p3 = Pipeline::new(PipelineKind::Net1, Some(net1), spec.input)?;
    let run = |pipeline: &Pipeline, label: &str| -> Result<TrainOutcome> {
        let t = pipeline.apply_data(train)?;
        let h = heldout.map(|h| pipeline.apply_data(h)).transpose()?;
        train_driver(&t, h.as_ref(), spec, cfg, label)
    };
    Ok(AgentOutcomes {
        model1: run(&Pipeline::raw(), "model1")?,
        model2: run(&p2, "model2")?,
        model3: run(&p3, "model3")?,
    })
}

// ---------------------------------------------------------------------------
// Unsupervised attention

pub(crate) struct AttentionObjective<'a> {
    net1: Net,
    net2: Net,
    net2_params: &'a ParamSet<f32>,
    train: &'a DriveData,
    heldout: Option<&'a DriveData>,
    cfg: TrainConfig,
}

impl<'a> AttentionObjective<'a> {
    pub(crate) fn new(
        net1_spec: &Net1Spec,
        net2: &'a Checkpoint,
        train: &'a DriveData,
        heldout: Option<&'a DriveData>,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        let ArchSpec::Agent(agent) = &net2.spec else {
            return Err(Error::invalid(format!(
                "the frozen driver must be an agent network, got {}",
                net2.spec.kind()
            )));
        };
        if agent.input != net1_spec.input {
            return Err(Error::invalid(format!(
                "Net1 input {} does not match the driver input {}",
                net1_spec.input, agent.input
            )));
        }
        let net2_net = net2.net()?;
        net2_net.check_params(&net2.params)?;
        check_side(train, agent.input, "training")?;
        if let Some(h) = heldout {
            check_side(h, agent.input, "held-out")?;
        }
        Ok(AttentionObjective {
            net1: Net::new(ArchSpec::Net1(net1_spec.clone()))?,
            net2: net2_net,
            net2_params: &net2.params,
            train,
            heldout: heldout.filter(|h| !h.is_empty()),
            cfg: cfg.clone(),
        })
    }

    fn data(&self, split: Split) -> Option<&DriveData> {
        match split {
            Split::Train => Some(self.train),
            Split::Heldout => self.heldout,
        }
    }

    pub(crate) fn net1(&self) -> &Net {
        &self.net1
    }
}

impl Objective for AttentionObjective<'_> {
    fn len(&self, split: Split) -> usize {
        self.data(split).map_or(0, |d| d.len())
    }

    fn eval(
        &self,
        params: &ParamSet<f32>,
        split: Split,
        idx: &[usize],
        grads: Option<&mut Gradients<f32>>,
        metrics: &mut Metrics,
    ) -> Result<f64> {
        let data = self.data(split).expect("eval is only called on non-empty splits");
        let (l1, l2) = (self.cfg.lambda1 as f32, self.cfg.lambda2 as f32);
        let x = data.images.gather(idx);
        let keep = grads.is_some();
        let (m, trace1) = if keep {
            let (m, t) = self.net1.forward_trace(params, &x)?;
            (m, Some(t))
        } else {
            (self.net1.forward(params, &x)?, None)
        };
        let xm = elementwise_mul(&x, &m)?;
        let (a, trace2) = if keep && self.cfg.lambda2 > 0.0 {
            let (a, t) = self.net2.forward_trace(self.net2_params, &xm)?;
            (a, Some(t))
        } else {
            (self.net2.forward(self.net2_params, &xm)?, None)
        };

        let pixels = m.len() / idx.len();
        let mut sum = 0.0;
        let mut ga = Vec::with_capacity(a.len());
        let mut gm_sparse = Vec::with_capacity(m.len());
        for ((pred, map), &i) in a.data().chunks_exact(3).zip(m.data().chunks_exact(pixels)).zip(idx) {
            let (loss2, g2) = mse_terms(pred, &data.actions[i]);
            let sparse = attention_sparsity(map, self.cfg.sparsity)?;
            let loss1 = sparse.value as f64;
            sum += self.cfg.lambda1 * loss1 + self.cfg.lambda2 * loss2;
            *metrics.entry("loss1").or_default() += loss1;
            *metrics.entry("loss2").or_default() += loss2;
            *metrics.entry("mean_attention").or_default() += map.iter().map(|&v| v as f64).sum::<f64>() / pixels as f64;
            ga.extend(g2.into_iter().map(|g| l2 * g));
            gm_sparse.extend(sparse.grad.into_iter().map(|g| l1 * g));
        }

        if let (Some(grads), Some(t1)) = (grads, trace1) {
            let mut dm = match trace2 {
                Some(t2) => {
                    let ga = Tensor::new(a.shape().to_vec(), ga)?;
                    let dxm = self
                        .net2
                        .backward(self.net2_params, t2, &ga, None, true)?
                        .expect("input gradient requested");
                    elementwise_mul_backward(&x, &m, &dxm)?.1
                }
                None => Tensor::zeros(m.shape().to_vec()),
            };
            for (d, s) in dm.data_mut().iter_mut().zip(&gm_sparse) {
                *d += s;
            }
            self.net1.backward(params, t1, &dm, Some(grads), false)?;
        }
        Ok(sum)
    }
}

/// Trains Net1 through the frozen driver in `net2` on
/// `lambda1 * sparsity + lambda2 * action MSE`.
pub fn train_attention_unsupervised(
    net2: &Checkpoint,
    train: &DriveData,
    heldout: Option<&DriveData>,
    spec: &Net1Spec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let obj = AttentionObjective::new(spec, net2, train, heldout, cfg)?;
    let mut params = obj.net1().init_params(cfg.seed);
    let report = fit("attention", &obj, &mut params, cfg)?;
    Ok(TrainOutcome {
        report,
        checkpoint: Checkpoint {
            spec: obj.net1.spec.clone(),
            params,
            meta: meta("net1", cfg),
        },
    })
}

/// Net1 parameter gradients of the step-two objective on the first batch of
/// `train`, at the seeded initialization `train_attention_unsupervised` uses.
pub fn attention_first_batch_gradients(
    net2: &Checkpoint,
    train: &DriveData,
    spec: &Net1Spec,
    cfg: &TrainConfig,
) -> Result<Gradients<f32>> {
    cfg.validate()?;
    let obj = AttentionObjective::new(spec, net2, train, None, cfg)?;
    let params = obj.net1().init_params(cfg.seed);
    let mut grads = params.zero_grads();
    let batch: Vec<usize> = (0..cfg.sgd.batch_size.min(train.len())).collect();
    for c in batch.chunks(cfg.chunk_size) {
        obj.eval(&params, Split::Train, c, Some(&mut grads), &mut Metrics::new())?;
    }
    Ok(grads)
}
