//! Flat parameter storage: every tensor lives in one contiguous `Vec<f64>`
//! addressed through a named [`Layout`].
//!
//! One buffer makes the optimizer, finite-difference checks, and checkpoint
//! serialization trivial — they all walk the same layout in the same order.

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::model::config::{ConfigError, ModelConfig};
use crate::seeding::rng_for;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown tensor {0}")]
    UnknownTensor(String),
    #[error("tensor {name} is {actual}-dimensional, asked for {requested}-dimensional view")]
    WrongRank {
        name: String,
        actual: usize,
        requested: usize,
    },
}

/// One named tensor inside the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered tensor directory for one model configuration. The order is part
/// of the checkpoint format and must never change for a given config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    specs: Vec<TensorSpec>,
    total: usize,
}

impl Layout {
    /// Canonical layout: embedding, encoder layers, encoder final norm,
    /// decoder layers, decoder final norm, output projection.
    pub fn build(cfg: &ModelConfig) -> Result<Layout, ConfigError> {
        cfg.validate()?;
        let d = cfg.width;
        let f = cfg.ffn_width;
        let v = cfg.vocab_size;
        let mut specs = Vec::new();
        let mut total = 0usize;
        let mut push = |name: String, shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            specs.push(TensorSpec {
                name,
                offset: total,
                shape,
            });
            total += len;
        };

        push("embed.tok".into(), vec![v, d]);
        let attn_block = |push: &mut dyn FnMut(String, Vec<usize>), prefix: &str| {
            for w in ["wq", "wk", "wv", "wo"] {
                push(format!("{prefix}.{w}"), vec![d, d]);
            }
        };
        let ln_block = |push: &mut dyn FnMut(String, Vec<usize>), prefix: &str| {
            push(format!("{prefix}.g"), vec![d]);
            push(format!("{prefix}.b"), vec![d]);
        };
        let ffn_block = |push: &mut dyn FnMut(String, Vec<usize>), prefix: &str| {
            push(format!("{prefix}.w1"), vec![d, f]);
            push(format!("{prefix}.b1"), vec![f]);
            push(format!("{prefix}.w2"), vec![f, d]);
            push(format!("{prefix}.b2"), vec![d]);
        };
        for i in 0..cfg.layers {
            ln_block(&mut push, &format!("enc.{i}.ln1"));
            attn_block(&mut push, &format!("enc.{i}.attn"));
            ln_block(&mut push, &format!("enc.{i}.ln2"));
            ffn_block(&mut push, &format!("enc.{i}.ffn"));
        }
        ln_block(&mut push, "enc.final_ln");
        for i in 0..cfg.layers {
            ln_block(&mut push, &format!("dec.{i}.ln1"));
            attn_block(&mut push, &format!("dec.{i}.self_attn"));
            ln_block(&mut push, &format!("dec.{i}.ln2"));
            attn_block(&mut push, &format!("dec.{i}.cross_attn"));
            ln_block(&mut push, &format!("dec.{i}.ln3"));
            ffn_block(&mut push, &format!("dec.{i}.ffn"));
        }
        ln_block(&mut push, "dec.final_ln");
        push("out.w".into(), vec![d, v]);
        push("out.b".into(), vec![v]);

        Ok(Layout { specs, total })
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn spec(&self, name: &str) -> Result<&TensorSpec, ParamError> {
        self.specs
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| ParamError::UnknownTensor(name.to_string()))
    }
}

/// Model parameters: a config, its layout, and one flat value buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    layout: Layout,
    values: Vec<f64>,
}

impl ModelParams {
    /// Seeded initialization: embeddings ~ N(0, 1/√width), projection
    /// matrices Xavier-uniform, norm gains 1, all biases 0.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<ModelParams, ParamError> {
        let layout = Layout::build(cfg)?;
        let mut values = vec![0.0; layout.total_len()];
        let mut rng = rng_for(seed, "model.init");
        let embed_std = 1.0 / (cfg.width as f64).sqrt();
        let embed_dist = Normal::new(0.0, embed_std).expect("positive std");
        for spec in layout.specs() {
            let slice = &mut values[spec.offset..spec.offset + spec.len()];
            let leaf = spec.name.rsplit('.').next().unwrap_or("");
            match leaf {
                "tok" => slice.iter_mut().for_each(|x| *x = embed_dist.sample(&mut rng)),
                "g" => slice.fill(1.0),
                "b" | "b1" | "b2" => slice.fill(0.0),
                _ => {
                    // 2-D projection: Xavier-uniform over fan-in + fan-out.
                    let (fan_in, fan_out) = (spec.shape[0], spec.shape[1]);
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    slice.iter_mut().for_each(|x| *x = rng.gen_range(-limit..limit));
                }
            }
        }
        Ok(ModelParams {
            config: cfg.clone(),
            layout,
            values,
        })
    }

    /// All-zero parameters (uniform logits everywhere).
    pub fn zeroed(cfg: &ModelConfig) -> Result<ModelParams, ParamError> {
        let layout = Layout::build(cfg)?;
        let values = vec![0.0; layout.total_len()];
        Ok(ModelParams {
            config: cfg.clone(),
            layout,
            values,
        })
    }

    /// Rebuilds parameters from a raw buffer, validating the length.
    pub fn from_values(cfg: &ModelConfig, values: Vec<f64>) -> Result<ModelParams, ParamError> {
        let layout = Layout::build(cfg)?;
        assert_eq!(
            values.len(),
            layout.total_len(),
            "value buffer length {} does not match layout {}",
            values.len(),
            layout.total_len()
        );
        Ok(ModelParams {
            config: cfg.clone(),
            layout,
            values,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// 2-D view of a named tensor.
    pub fn mat(&self, name: &str) -> Result<ArrayView2<'_, f64>, ParamError> {
        let spec = self.layout.spec(name)?;
        view2(&self.values, spec)
    }

    /// 1-D view of a named tensor.
    pub fn vec1(&self, name: &str) -> Result<ArrayView1<'_, f64>, ParamError> {
        let spec = self.layout.spec(name)?;
        view1(&self.values, spec)
    }
}

pub(crate) fn view2<'a>(values: &'a [f64], spec: &TensorSpec) -> Result<ArrayView2<'a, f64>, ParamError> {
    if spec.shape.len() != 2 {
        return Err(ParamError::WrongRank {
            name: spec.name.clone(),
            actual: spec.shape.len(),
            requested: 2,
        });
    }
    let slice = &values[spec.offset..spec.offset + spec.len()];
    Ok(ArrayView2::from_shape((spec.shape[0], spec.shape[1]), slice).expect("layout-consistent shape"))
}

pub(crate) fn view1<'a>(values: &'a [f64], spec: &TensorSpec) -> Result<ArrayView1<'a, f64>, ParamError> {
    if spec.shape.len() != 1 {
        return Err(ParamError::WrongRank {
            name: spec.name.clone(),
            actual: spec.shape.len(),
            requested: 1,
        });
    }
    let slice = &values[spec.offset..spec.offset + spec.len()];
    Ok(ArrayView1::from_shape(spec.shape[0], slice).expect("layout-consistent shape"))
}

pub(crate) fn view2_mut<'a>(
    values: &'a mut [f64],
    spec: &TensorSpec,
) -> Result<ArrayViewMut2<'a, f64>, ParamError> {
    if spec.shape.len() != 2 {
        return Err(ParamError::WrongRank {
            name: spec.name.clone(),
            actual: spec.shape.len(),
            requested: 2,
        });
    }
    let slice = &mut values[spec.offset..spec.offset + spec.len()];
    Ok(ArrayViewMut2::from_shape((spec.shape[0], spec.shape[1]), slice).expect("layout-consistent shape"))
}

pub(crate) fn view1_mut<'a>(
    values: &'a mut [f64],
    spec: &TensorSpec,
) -> Result<ArrayViewMut1<'a, f64>, ParamError> {
    if spec.shape.len() != 1 {
        return Err(ParamError::WrongRank {
            name: spec.name.clone(),
            actual: spec.shape.len(),
            requested: 1,
        });
    }
    let slice = &mut values[spec.offset..spec.offset + spec.len()];
    Ok(ArrayViewMut1::from_shape(spec.shape[0], slice).expect("layout-consistent shape"))
}
