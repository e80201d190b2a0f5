use std::collections::BTreeMap;
use std::sync::OnceLock;

use super::{AdaBoost, Cart, Gbm, Growth, Knn, Krr, Learner, LearnerError, RandomForest, Svr, Weighting};

/// Learners keyed by name.
pub struct Registry {
    learners: BTreeMap<&'static str, Box<dyn Learner>>,
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            learners: BTreeMap::new(),
        }
    }

    /// All built-in learners.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Cart));
        r.register(Box::new(RandomForest));
        r.register(Box::new(Gbm(Growth::LeafWise)));
        r.register(Box::new(Gbm(Growth::LevelWise)));
        r.register(Box::new(AdaBoost));
        r.register(Box::new(Knn(Weighting::Uniform)));
        r.register(Box::new(Knn(Weighting::Distance)));
        r.register(Box::new(Krr));
        r.register(Box::new(Svr));
        r
    }

    /// Adds a learner, replacing any with the same name.
    pub fn register(&mut self, learner: Box<dyn Learner>) {
        self.learners.insert(learner.name(), learner);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Learner, LearnerError> {
        self.learners
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| LearnerError::UnknownLearner(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.learners.keys().copied().collect()
    }

    /// Report label for a registered name, or the name itself.
    pub fn label<'a>(&self, name: &'a str) -> &'a str {
        match self.learners.get(name) {
            Some(l) => l.label(),
            None => name,
        }
    }
}

/// Process-wide registry of built-in learners.
pub fn registry() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(Registry::builtin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names_and_labels() {
        let r = registry();
        assert_eq!(
            r.names(),
            vec!["adaboost", "cart", "gbm_leafwise", "gbm_levelwise", "knn_distance", "knn_uniform", "krr", "rf", "svr"]
        );
        assert_eq!(r.label("gbm_leafwise"), "LightGBM");
        assert_eq!(r.label("gbm_levelwise"), "XGB");
        assert_eq!(r.label("svr"), "SVM");
        assert_eq!(r.label("knn_distance"), "KNN_Distance");
        assert_eq!(r.label("unregistered"), "unregistered");
    }

    #[test]
    fn default_spaces_only_name_declared_params() {
        for name in registry().names() {
            let l = registry().get(name).unwrap();
            let decls = l.params();
            for p in l.default_space().params() {
                assert!(decls.iter().any(|d| d.name == p), "{name}: {p}");
            }
        }
    }
}
