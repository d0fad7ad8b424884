//! Example configs shipped inside the binary.

use crate::config::ExperimentConfig;

pub struct Example {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! examples {
    ($($name:literal),* $(,)?) => {
        &[$(Example { name: $name, text: include_str!(concat!("../configs/", $name, ".toml")) }),*]
    };
}

pub const EXAMPLES: &[Example] = examples![
    "capacity-empty",
    "capacity-point",
    "cantor-1d",
    "carpet-2d",
    "poincare-dirichlet",
    "points-1d",
    "equivalence-2d",
    "synthesis-point",
    "synthesis-condition",
    "deviation",
];

pub fn find(name: &str) -> Option<&'static Example> {
    EXAMPLES.iter().find(|e| e.name == name)
}

impl Example {
    pub fn config(&self) -> anyhow::Result<ExperimentConfig> {
        ExperimentConfig::parse(self.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_example_validates() {
        assert!(!EXAMPLES.is_empty());
        for e in EXAMPLES {
            let cfg = e.config().unwrap_or_else(|err| panic!("{}: {err:#}", e.name));
            assert!(!cfg.description.is_empty(), "{}", e.name);
        }
    }

    #[test]
    fn names_are_unique() {
        for (i, a) in EXAMPLES.iter().enumerate() {
            assert!(EXAMPLES[i + 1..].iter().all(|b| b.name != a.name));
        }
    }
}
