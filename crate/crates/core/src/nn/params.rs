use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;

/// How a parameter block starts out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// Normal with standard deviation `sqrt(gain / fan_in)`.
    FanIn {
        fan_in: usize,
        gain: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named blocks laid out back to back in one flat vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamLayout {
    specs: Vec<ParamSpec>,
    by_name: HashMap<String, usize>,
    total: usize,
}

impl ParamLayout {
    pub fn declare(&mut self, name: impl Into<String>, shape: Vec<usize>) -> usize {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter {name}"
        );
        let spec = ParamSpec {
            name: name.clone(),
            shape,
            offset: self.total,
        };
        self.total += spec.len();
        self.by_name.insert(name, self.specs.len());
        self.specs.push(spec);
        self.specs.len() - 1
    }

    pub fn get(&self, name: &str) -> &ParamSpec {
        let i = self
            .by_name
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        &self.specs[*i]
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Draws initial values for every block in declaration order.
    pub fn initialize(&self, inits: &[Init], rng: &mut impl Rng) -> Vec<f64> {
        assert_eq!(inits.len(), self.specs.len());
        let mut out = Vec::with_capacity(self.total);
        for (spec, init) in self.specs.iter().zip(inits) {
            match *init {
                Init::Zeros => out.extend(std::iter::repeat_n(0.0, spec.len())),
                Init::FanIn { fan_in, gain } => {
                    let std = (gain / fan_in.max(1) as f64).sqrt();
                    out.extend((0..spec.len()).map(|_| std * rng.sample::<f64, _>(StandardNormal)));
                }
            }
        }
        out
    }
}
