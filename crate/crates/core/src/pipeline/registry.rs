use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{derive_layout, Task};
use crate::error::{Error, Result};
use crate::geometry::{validate_shape, BoundaryShape, ScatterConfig, ShapeClass};
use crate::scalar::Scalar;
use crate::training::{argmax, Model};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CLASSIFIER_STEM: &str = "classifier";

/// File stem of the regressor for a class.
pub fn regressor_stem(class: ShapeClass) -> &'static str {
    class.name()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// `classifier` or the regressed class name.
    pub role: String,
    pub model_file: String,
    pub scaler_file: String,
    pub network: String,
    pub angles: usize,
    pub channels: usize,
    pub outputs: usize,
    pub seed: Option<u64>,
    /// Impedance used when the regressor does not predict `λ`.
    pub fixed_impedance: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub models: Vec<ManifestEntry>,
}

/// Classifier plus one regressor per class, each with its own scalers and
/// input layout.
#[derive(Clone, Debug)]
pub struct ModelRegistry<T: Scalar> {
    pub classifier: Model<T>,
    pub regressors: BTreeMap<ShapeClass, Model<T>>,
    /// Impedance reported for classes whose regressor was trained at fixed `λ`.
    pub fixed_impedance: BTreeMap<ShapeClass, f64>,
    pub seeds: BTreeMap<String, u64>,
}

/// Measurement vectors keyed by layout. A request for a layout that is not
/// stored directly is served by subsampling a stored superset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Measurements {
    sets: Vec<((usize, usize), Vec<f64>)>,
}

impl Measurements {
    pub fn new() -> Self {
        Measurements::default()
    }

    pub fn single(angles: usize, channels: usize, features: Vec<f64>) -> Self {
        Measurements::new().with(angles, channels, features)
    }

    pub fn with(mut self, angles: usize, channels: usize, features: Vec<f64>) -> Self {
        self.sets.push(((angles, channels), features));
        self
    }

    /// Features in layout `(T0, C0)`, exact or derived.
    pub fn features_for(&self, angles: usize, channels: usize, model: &str) -> Result<Vec<f64>> {
        if let Some((_, f)) = self.sets.iter().find(|(l, _)| *l == (angles, channels)) {
            return Ok(f.clone());
        }
        for (from, f) in &self.sets {
            if let Ok(d) = derive_layout(f, *from, (angles, channels)) {
                return Ok(d);
            }
        }
        Err(Error::LayoutMissing {
            model: model.to_string(),
            t0: angles,
            c0: channels,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub classifier: String,
    pub classifier_layout: (usize, usize),
    pub regressor: String,
    pub regressor_layout: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseSolution {
    pub class: ShapeClass,
    pub probabilities: Vec<(ShapeClass, f64)>,
    /// Raw regressor output in original units, not projected onto the
    /// sampling ranges.
    pub params: Vec<f64>,
    pub shape: BoundaryShape,
    /// Set when the predicted shape violates a sampling constraint.
    pub diagnostic: Option<String>,
    pub provenance: Provenance,
}

impl<T: Scalar> ModelRegistry<T> {
    pub fn new(classifier: Model<T>) -> Result<Self> {
        if classifier.task() != Task::Classification {
            return Err(Error::InvalidConfig(
                "registry classifier must be a classification model".into(),
            ));
        }
        Ok(ModelRegistry {
            classifier,
            regressors: BTreeMap::new(),
            fixed_impedance: BTreeMap::new(),
            seeds: BTreeMap::new(),
        })
    }

    /// Adds the regressor for `class`. Regressors that do not predict `λ`
    /// need `fixed_impedance`.
    pub fn add_regressor(&mut self, class: ShapeClass, model: Model<T>, fixed_impedance: Option<f64>) -> Result<()> {
        if model.task() != Task::Regression || model.meta.classes != [class] {
            return Err(Error::InvalidConfig(format!("model is not a {class} regressor")));
        }
        let outputs = model.network.output_dim();
        let n = class.coeff_count() + 2;
        match (outputs, fixed_impedance) {
            (o, _) if o == n + 1 => {}
            (o, Some(l)) if o == n => {
                self.fixed_impedance.insert(class, l);
            }
            (o, _) => {
                return Err(Error::InvalidConfig(format!(
                    "{class} regressor with {o} outputs needs {} outputs or a fixed impedance",
                    n + 1
                )))
            }
        }
        self.regressors.insert(class, model);
        Ok(())
    }

    fn model_label(model: &Model<T>) -> String {
        let (t, c) = model.input_shape();
        format!("{} (T0={t}, C0={c})", model.network.spec().name)
    }

    /// Classifies each sample, routes it to the predicted class's regressor
    /// and assembles the predicted obstacle.
    pub fn infer_batch(&self, items: &[Measurements]) -> Result<Vec<InverseSolution>> {
        let (ct, cc) = self.classifier.input_shape();
        let cname = Self::model_label(&self.classifier);
        let cfeat: Vec<Vec<f64>> = items
            .iter()
            .map(|m| m.features_for(ct, cc, &cname))
            .collect::<Result<_>>()?;
        let refs: Vec<&[f64]> = cfeat.iter().map(Vec::as_slice).collect();
        let probs = self.classifier.predict(&refs)?;
        let classes: Vec<ShapeClass> = probs.iter().map(|p| self.classifier.meta.classes[argmax(p)]).collect();

        let mut params: Vec<Option<Vec<f64>>> = vec![None; items.len()];
        for (&class, model) in &self.regressors {
            let idx: Vec<usize> = (0..items.len()).filter(|&i| classes[i] == class).collect();
            if idx.is_empty() {
                continue;
            }
            let (rt, rc) = model.input_shape();
            let rname = Self::model_label(model);
            let feats: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| items[i].features_for(rt, rc, &rname))
                .collect::<Result<_>>()?;
            let refs: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
            for (i, p) in idx.into_iter().zip(model.predict(&refs)?) {
                params[i] = Some(p);
            }
        }

        let check_config = ScatterConfig::standard(ct, cc)
            .unwrap_or_else(|_| ScatterConfig::standard(32, 2).expect("standard layout"));
        let mut out = Vec::with_capacity(items.len());
        for (i, p) in params.into_iter().enumerate() {
            let class = classes[i];
            let params = p.ok_or_else(|| Error::InvalidConfig(format!("no regressor registered for class {class}")))?;
            let model = &self.regressors[&class];
            let shape = BoundaryShape::from_targets(class, &params, self.fixed_impedance.get(&class).copied())?;
            let check = validate_shape(&shape, &check_config);
            out.push(InverseSolution {
                class,
                probabilities: self
                    .classifier
                    .meta
                    .classes
                    .iter()
                    .copied()
                    .zip(probs[i].iter().copied())
                    .collect(),
                params,
                shape,
                diagnostic: check.diagnostic,
                provenance: Provenance {
                    classifier: cname.clone(),
                    classifier_layout: (ct, cc),
                    regressor: Self::model_label(model),
                    regressor_layout: model.input_shape(),
                },
            });
        }
        Ok(out)
    }

    pub fn infer(&self, measurements: &Measurements) -> Result<InverseSolution> {
        Ok(self.infer_batch(std::slice::from_ref(measurements))?.remove(0))
    }

    /// Writes every model, its scaler file and `manifest.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = Manifest::default();
        let mut entry = |role: &str, model: &Model<T>, fixed: Option<f64>| -> Result<()> {
            model.save(dir, role)?;
            let (angles, channels) = model.input_shape();
            manifest.models.push(ManifestEntry {
                role: role.to_string(),
                model_file: format!("{role}.model"),
                scaler_file: format!("{role}.scaler.json"),
                network: model.network.spec().name.clone(),
                angles,
                channels,
                outputs: model.network.output_dim(),
                seed: self.seeds.get(role).copied(),
                fixed_impedance: fixed,
            });
            Ok(())
        };
        entry(CLASSIFIER_STEM, &self.classifier, None)?;
        for (class, model) in &self.regressors {
            entry(regressor_stem(*class), model, self.fixed_impedance.get(class).copied())?;
        }
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let classifier = manifest
            .models
            .iter()
            .find(|e| e.role == CLASSIFIER_STEM)
            .ok_or_else(|| Error::InvalidConfig(format!("{} lists no classifier", path.display())))?;
        let mut reg = ModelRegistry::new(Model::load(dir, &classifier.role)?)?;
        for e in &manifest.models {
            if let Some(seed) = e.seed {
                reg.seeds.insert(e.role.clone(), seed);
            }
            if e.role == CLASSIFIER_STEM {
                continue;
            }
            let class = ShapeClass::from_name(&e.role)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown registry role '{}'", e.role)))?;
            reg.add_regressor(class, Model::load(dir, &e.role)?, e.fixed_impedance)?;
        }
        Ok(reg)
    }
}

/// Trains the classifier and the three regressors (`star` selects the
/// fixed- or variable-impedance star suite) and assembles them. Regressors
/// train concurrently. With `out_dir` set, each suite writes its bundle to
/// a subdirectory and the registry goes to `registry/`.
pub fn train_registry<T: Scalar>(
    config: &crate::pipeline::ExperimentConfig,
    star: crate::pipeline::Suite,
) -> Result<(ModelRegistry<T>, Vec<crate::pipeline::ExperimentReport>)> {
    use crate::pipeline::{run_experiment, Suite};
    if !matches!(star, Suite::StarFixed | Suite::StarVariable) {
        return Err(Error::InvalidConfig(format!("{star} is not a star suite")));
    }
    let suite_config = |s: Suite| {
        let mut c = config.clone();
        c.out_dir = config.out_dir.as_ref().map(|d| d.join(s.name()));
        c
    };
    let suites = [Suite::Classification, Suite::Peanut, Suite::Kite, star];
    let outcomes = std::thread::scope(|scope| {
        let handles: Vec<_> = suites
            .iter()
            .map(|&s| {
                let c = suite_config(s);
                scope.spawn(move || run_experiment::<T>(s, &c))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training worker panicked"))
            .collect::<Vec<_>>()
    });
    let mut outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?.into_iter();
    let cls = outcomes.next().expect("classification outcome");
    let mut reports = vec![cls.report];
    let mut registry = ModelRegistry::new(cls.model)?;
    registry.seeds.insert(CLASSIFIER_STEM.into(), config.seed);
    for (suite, o) in suites[1..].iter().zip(outcomes) {
        let class = suite.classes()[0];
        let fixed = match suite.impedance(config.fixed_impedance) {
            crate::geometry::ImpedanceMode::Fixed(l) => Some(l),
            crate::geometry::ImpedanceMode::Variable => None,
        };
        registry.add_regressor(class, o.model, fixed)?;
        registry.seeds.insert(regressor_stem(class).into(), config.seed);
        reports.push(o.report);
    }
    if let Some(dir) = &config.out_dir {
        registry.save(dir.join("registry"))?;
    }
    Ok((registry, reports))
}
