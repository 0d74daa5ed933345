//! Far-field datasets: channel assembly, the measurement-to-tensor reshape,
//! synthetic generation, standardization, noise, splits and persistence.

mod io;
mod split;
mod standardize;
mod surrogate;

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_shape, BoundaryShape, ImpedanceMode, ScatterConfig, ShapeClass};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub use io::{read_dataset, write_dataset, write_dataset_binary, write_dataset_text, BINARY_MAGIC, TEXT_MAGIC};
pub use split::{add_noise, add_noise_in_place, split_dataset, DatasetSplit};
pub use standardize::{Standardizer, STD_FLOOR};
pub use surrogate::{surrogate_farfield, FarField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    pub fn tag(self) -> &'static str {
        match self {
            Task::Classification => "class",
            Task::Regression => "reg",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Field {
    E,
    H,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Part {
    Re,
    Im,
}

/// Incidence direction, restricted to the two used by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Incidence {
    Zero,
    Pi,
}

impl Incidence {
    pub fn angle(self) -> f64 {
        match self {
            Incidence::Zero => 0.0,
            Incidence::Pi => PI,
        }
    }

    pub fn from_angle(phi: f64) -> Option<Self> {
        if phi == 0.0 {
            Some(Incidence::Zero)
        } else if phi == PI {
            Some(Incidence::Pi)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Channel {
    pub field: Field,
    pub part: Part,
    pub incidence: Incidence,
}

/// Ordered list of input channels.
///
/// Only three layouts exist: `[ReE, ImE]` (C0 = 2), `[ReE, ImE, ReH, ImH]`
/// (C0 = 4), and the C0 = 4 layout for φ = 0 followed by the same for φ = π
/// (C0 = 8). Each is a prefix of the next.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLayout(Vec<Channel>);

impl ChannelLayout {
    pub fn for_channels(c0: usize) -> Result<Self> {
        if !matches!(c0, 2 | 4 | 8) {
            return Err(Error::LayoutMismatch(format!("no channel layout with C0 = {c0}")));
        }
        let mut chans = Vec::with_capacity(c0);
        for incidence in [Incidence::Zero, Incidence::Pi] {
            for field in [Field::E, Field::H] {
                for part in [Part::Re, Part::Im] {
                    chans.push(Channel { field, part, incidence });
                }
            }
        }
        chans.truncate(c0);
        Ok(ChannelLayout(chans))
    }

    pub fn channels(&self) -> &[Channel] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn incidences(&self) -> Vec<Incidence> {
        let mut out: Vec<Incidence> = Vec::new();
        for c in &self.0 {
            if !out.contains(&c.incidence) {
                out.push(c.incidence);
            }
        }
        out
    }
}

/// Channel-major concatenation: `features[c·T0 + i]` is layout channel `c` at
/// angle index `i`.
pub fn assemble_channels(fields: &[FarField], layout: &ChannelLayout, t0: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(layout.len() * t0);
    for ch in layout.channels() {
        let src = fields
            .iter()
            .find(|f| f.incidence == ch.incidence)
            .ok_or_else(|| Error::LayoutMismatch(format!("no far field for incidence {:?}", ch.incidence)))?;
        let values = match ch.field {
            Field::E => &src.e,
            Field::H => &src.h,
        };
        if values.len() != t0 {
            return Err(Error::LayoutMismatch(format!(
                "{:?} field has {} angles, layout needs {t0}",
                ch.field,
                values.len()
            )));
        }
        out.extend(values.iter().map(|z| match ch.part {
            Part::Re => z.re,
            Part::Im => z.im,
        }));
    }
    Ok(out)
}

/// `X[i, c] = features[c·T0 + i]`.
pub fn reshape_to_tensor<T: Scalar>(features: &[f64], t0: usize, c0: usize) -> Result<Tensor<T>> {
    Tensor::from_channel_major(features, t0, c0)
}

/// Inverse of [`reshape_to_tensor`].
pub fn tensor_to_features<T: Scalar>(tensor: &Tensor<T>) -> Vec<f64> {
    tensor.to_channel_major()
}

/// Selects a sub-layout from a wider measurement vector: the first `to.1`
/// channels, angles subsampled by `from.0 / to.0`.
pub fn derive_layout(features: &[f64], from: (usize, usize), to: (usize, usize)) -> Result<Vec<f64>> {
    let ((t_from, c_from), (t_to, c_to)) = (from, to);
    if features.len() != t_from * c_from {
        return Err(Error::shape(t_from * c_from, features.len()));
    }
    if c_to > c_from || t_to == 0 || t_to > t_from || t_from % t_to != 0 {
        return Err(Error::LayoutMismatch(format!(
            "cannot derive T0={t_to} C0={c_to} from T0={t_from} C0={c_from}"
        )));
    }
    let stride = t_from / t_to;
    let mut out = Vec::with_capacity(t_to * c_to);
    for c in 0..c_to {
        out.extend((0..t_to).map(|i| features[c * t_from + i * stride]));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Label(ShapeClass),
    Params(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FarFieldSample {
    pub features: Vec<f64>,
    pub target: Target,
    pub shape_id: String,
}

impl FarFieldSample {
    pub fn label(&self) -> Option<ShapeClass> {
        match self.target {
            Target::Label(c) => Some(c),
            Target::Params(_) => None,
        }
    }

    pub fn params(&self) -> Option<&[f64]> {
        match &self.target {
            Target::Params(p) => Some(p),
            Target::Label(_) => None,
        }
    }
}

/// A set of samples sharing one input layout and one task.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub angles: usize,
    pub channels: usize,
    pub task: Task,
    /// Label set for classification; the single obstacle class for regression.
    pub classes: Vec<ShapeClass>,
    /// Regression target length `P` (0 for classification).
    pub target_dim: usize,
    pub samples: Vec<FarFieldSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.angles * self.channels
    }

    /// Checks per-sample lengths and labels against the header fields.
    pub fn validate(&self) -> Result<()> {
        if self.task == Task::Classification && self.target_dim != 0 {
            return Err(Error::InvalidConfig("classification dataset with P != 0".into()));
        }
        for (n, s) in self.samples.iter().enumerate() {
            if s.features.len() != self.feature_dim() {
                return Err(Error::shape(
                    format!("{} features in sample {n}", self.feature_dim()),
                    s.features.len(),
                ));
            }
            match (&s.target, self.task) {
                (Target::Label(c), Task::Classification) if self.classes.contains(c) => {}
                (Target::Params(p), Task::Regression) if p.len() == self.target_dim => {}
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "sample {n} target inconsistent with dataset"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            ..self.header_only()
        }
    }

    fn header_only(&self) -> Dataset {
        Dataset {
            angles: self.angles,
            channels: self.channels,
            task: self.task,
            classes: self.classes.clone(),
            target_dim: self.target_dim,
            samples: Vec::new(),
        }
    }

    /// Re-expresses every sample in a narrower layout (see [`derive_layout`]).
    pub fn derive(&self, angles: usize, channels: usize) -> Result<Dataset> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                Ok(FarFieldSample {
                    features: derive_layout(&s.features, (self.angles, self.channels), (angles, channels))?,
                    ..s.clone()
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            angles,
            channels,
            samples,
            ..self.header_only()
        })
    }
}

/// An obstacle together with its measurement vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Obstacle {
    pub shape: BoundaryShape,
    pub features: Vec<f64>,
    pub shape_id: String,
}

/// What to generate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationSpec {
    /// Classes are interleaved: sample `i` has class `classes[i % len]`.
    pub classes: Vec<ShapeClass>,
    pub count: usize,
    pub config: ScatterConfig,
    pub seed: u64,
    pub impedance: ImpedanceMode,
    pub task: Task,
}

/// Samples obstacles and computes their measurements. Sample `i` draws from
/// its own random stream, so the output does not depend on thread count.
pub fn generate_obstacles(spec: &GenerationSpec) -> Result<Vec<Obstacle>> {
    if spec.count == 0 {
        return Err(Error::TooSmall { got: 0, min: 1 });
    }
    if spec.classes.is_empty() {
        return Err(Error::InvalidConfig("no obstacle class requested".into()));
    }
    spec.config.validate()?;
    let layout = ChannelLayout::for_channels(spec.config.channels)?;
    let incidences: Vec<Incidence> = spec
        .config
        .phis
        .iter()
        .map(|&p| Incidence::from_angle(p).ok_or_else(|| Error::InvalidConfig(format!("incidence {p}"))))
        .collect::<Result<_>>()?;
    for inc in layout.incidences() {
        if !incidences.contains(&inc) {
            return Err(Error::LayoutMismatch(format!("layout needs incidence {inc:?}")));
        }
    }

    let one = |i: usize| -> Result<Obstacle> {
        let class = spec.classes[i % spec.classes.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let shape = sample_shape(class, &mut rng, &spec.config, spec.impedance)?;
        let fields = incidences
            .iter()
            .map(|&inc| surrogate_farfield(&shape, &spec.config, inc))
            .collect::<Result<Vec<_>>>()?;
        let features = assemble_channels(&fields, &layout, spec.config.angles)?;
        Ok(Obstacle {
            shape,
            features,
            shape_id: format!("s{}-{}", spec.seed, i),
        })
    };

    let threads = crate::worker_threads().min(spec.count);
    if threads <= 1 {
        return (0..spec.count).map(one).collect();
    }
    let chunk = spec.count.div_ceil(threads);
    let parts: Vec<Result<Vec<Obstacle>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let one = &one;
                scope.spawn(move || (t * chunk..((t + 1) * chunk).min(spec.count)).map(one).collect())
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("generation worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(spec.count);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Converts obstacles into a labelled dataset for the given task.
pub fn obstacles_to_dataset(
    obstacles: &[Obstacle],
    classes: &[ShapeClass],
    task: Task,
    config: &ScatterConfig,
    with_impedance: bool,
) -> Result<Dataset> {
    let target_dim = match task {
        Task::Classification => 0,
        Task::Regression => {
            if classes.len() != 1 {
                return Err(Error::InvalidConfig(
                    "regression datasets hold exactly one class".into(),
                ));
            }
            classes[0].coeff_count() + 2 + usize::from(with_impedance)
        }
    };
    let samples = obstacles
        .iter()
        .map(|o| FarFieldSample {
            features: o.features.clone(),
            target: match task {
                Task::Classification => Target::Label(o.shape.class),
                Task::Regression => Target::Params(o.shape.targets(with_impedance)),
            },
            shape_id: o.shape_id.clone(),
        })
        .collect();
    let mut classes = classes.to_vec();
    classes.sort();
    classes.dedup();
    Ok(Dataset {
        angles: config.angles,
        channels: config.channels,
        task,
        classes,
        target_dim,
        samples,
    })
}

/// Generates a dataset: sampling, surrogate far fields for every incidence,
/// channel assembly, and targets. Regression targets carry `λ` only when the
/// impedance is variable.
pub fn generate_dataset(spec: &GenerationSpec) -> Result<Dataset> {
    let obstacles = generate_obstacles(spec)?;
    let with_impedance = matches!(spec.impedance, ImpedanceMode::Variable);
    obstacles_to_dataset(&obstacles, &spec.classes, spec.task, &spec.config, with_impedance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn field(inc: Incidence, e: &[(f64, f64)], h: &[(f64, f64)]) -> FarField {
        let c = |v: &[(f64, f64)]| v.iter().map(|&(r, i)| Complex64::new(r, i)).collect();
        FarField {
            incidence: inc,
            e: c(e),
            h: c(h),
        }
    }

    #[test]
    fn layouts_match_assemblies() {
        let l4 = ChannelLayout::for_channels(4).unwrap();
        let l8 = ChannelLayout::for_channels(8).unwrap();
        assert_eq!(&l8.channels()[..4], l4.channels());
        assert!(l8.channels()[4..].iter().all(|c| c.incidence == Incidence::Pi));
        assert_eq!(
            l4.channels()[2],
            Channel {
                field: Field::H,
                part: Part::Re,
                incidence: Incidence::Zero
            }
        );
        assert!(ChannelLayout::for_channels(3).is_err());
    }

    #[test]
    fn assemble_two_channels() {
        let f = field(Incidence::Zero, &[(1.0, 4.0), (2.0, 5.0), (3.0, 6.0)], &[(0.0, 0.0); 3]);
        let l = ChannelLayout::for_channels(2).unwrap();
        assert_eq!(
            assemble_channels(&[f], &l, 3).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        );
    }

    #[test]
    fn assemble_lengths_and_missing_incidence() {
        let z = vec![(0.5, 0.25); 128];
        let f0 = field(Incidence::Zero, &z, &z);
        let fp = field(Incidence::Pi, &z, &z);
        let l4 = ChannelLayout::for_channels(4).unwrap();
        let l8 = ChannelLayout::for_channels(8).unwrap();
        assert_eq!(
            assemble_channels(std::slice::from_ref(&f0), &l4, 128).unwrap().len(),
            512
        );
        assert_eq!(assemble_channels(&[f0.clone(), fp], &l8, 128).unwrap().len(), 1024);
        assert!(matches!(
            assemble_channels(&[f0], &l8, 128),
            Err(Error::LayoutMismatch(_))
        ));
    }

    #[test]
    fn reshape_example_and_inverse() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let t = reshape_to_tensor::<f64>(&x, 3, 2).unwrap();
        assert_eq!(t.get(0, 0), 1.0);
        assert_eq!(t.get(0, 1), 4.0);
        assert_eq!(t.get(1, 1), 5.0);
        assert_eq!(t.get(2, 0), 3.0);
        assert_eq!(tensor_to_features(&t), x.to_vec());
        let big: Vec<f64> = (0..512).map(|v| v as f64 * 0.1).collect();
        let t = reshape_to_tensor::<f64>(&big, 128, 4).unwrap();
        assert_eq!(t.shape(), (128, 4));
        assert!(reshape_to_tensor::<f64>(&big, 128, 2).is_err());
    }

    #[test]
    fn derive_layout_selects_prefix_channels_and_stride() {
        let f: Vec<f64> = (0..128 * 8).map(|v| v as f64).collect();
        let d = derive_layout(&f, (128, 8), (32, 2)).unwrap();
        assert_eq!(d.len(), 64);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 4.0);
        assert_eq!(d[32], 128.0);
        assert!(derive_layout(&f, (128, 8), (48, 2)).is_err());
    }

    fn spec(
        classes: Vec<ShapeClass>,
        n: usize,
        t0: usize,
        c0: usize,
        imp: ImpedanceMode,
        task: Task,
    ) -> GenerationSpec {
        GenerationSpec {
            classes,
            count: n,
            config: ScatterConfig::standard(t0, c0).unwrap(),
            seed: 17,
            impedance: imp,
            task,
        }
    }

    #[test]
    fn classification_generation_shapes() {
        let s = spec(
            ShapeClass::ALL.to_vec(),
            30,
            32,
            2,
            ImpedanceMode::Variable,
            Task::Classification,
        );
        let d = generate_dataset(&s).unwrap();
        d.validate().unwrap();
        assert_eq!(d.len(), 30);
        assert!(d.samples.iter().all(|s| s.features.len() == 64));
        for c in ShapeClass::ALL {
            assert_eq!(d.samples.iter().filter(|s| s.label() == Some(c)).count(), 10);
        }
    }

    #[test]
    fn star_target_lengths() {
        let fixed = spec(
            vec![ShapeClass::Star],
            4,
            128,
            4,
            ImpedanceMode::Fixed(2.0),
            Task::Regression,
        );
        let d = generate_dataset(&fixed).unwrap();
        assert_eq!(d.target_dim, 13);
        assert_eq!(d.samples[0].features.len(), 512);
        let var = spec(
            vec![ShapeClass::Star],
            4,
            128,
            8,
            ImpedanceMode::Variable,
            Task::Regression,
        );
        let d = generate_dataset(&var).unwrap();
        assert_eq!(d.target_dim, 14);
        assert_eq!(d.samples[0].features.len(), 1024);
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(
            ShapeClass::ALL.to_vec(),
            12,
            32,
            2,
            ImpedanceMode::Variable,
            Task::Classification,
        );
        assert_eq!(generate_dataset(&s).unwrap(), generate_dataset(&s).unwrap());
    }

    #[test]
    fn superset_derivation_matches_direct_generation() {
        let wide = spec(
            vec![ShapeClass::Kite],
            3,
            128,
            8,
            ImpedanceMode::Variable,
            Task::Regression,
        );
        let narrow = spec(
            vec![ShapeClass::Kite],
            3,
            32,
            2,
            ImpedanceMode::Variable,
            Task::Regression,
        );
        let a = generate_dataset(&wide).unwrap().derive(32, 2).unwrap();
        let b = generate_dataset(&narrow).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.target, y.target);
            for (u, v) in x.features.iter().zip(&y.features) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
