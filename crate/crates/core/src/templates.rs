//! Failure-class monitor templates and their grounding onto model elements.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arch::{Architecture, ModelError};
use crate::inject::FailureKind;
use crate::ltl::{parse, LtlFormula, Proposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TemplateId {
    /// Component never in UNKNOWN state.
    Phi1,
    /// Component started with exceptions within the threshold.
    Phi2,
    /// Component present in the architecture.
    Phi3,
    /// Connector up between two started components.
    Phi4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetKind {
    Component,
    Connector,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [TemplateId::Phi1, TemplateId::Phi2, TemplateId::Phi3, TemplateId::Phi4];

    pub fn formula_text(self) -> &'static str {
        match self {
            TemplateId::Phi1 => "G (!isUnknown)",
            TemplateId::Phi2 => "G (isStarted && lowException)",
            TemplateId::Phi3 => "G (present)",
            TemplateId::Phi4 => "G (isStartedComponent1 && isStartedComponent2 && connector)",
        }
    }

    pub fn target_kind(self) -> TargetKind {
        match self {
            TemplateId::Phi4 => TargetKind::Connector,
            _ => TargetKind::Component,
        }
    }

    pub fn failure_kind(self) -> FailureKind {
        match self {
            TemplateId::Phi1 => FailureKind::CF1,
            TemplateId::Phi2 => FailureKind::CF2,
            TemplateId::Phi3 => FailureKind::CF3,
            TemplateId::Phi4 => FailureKind::CF4,
        }
    }

    pub fn formula(self) -> LtlFormula {
        parse(self.formula_text()).expect("template formulas parse")
    }

    /// Grounds every atom of the template against `target`. For the
    /// connector template the two component atoms are bound to the
    /// connector's source and target.
    pub fn ground(self, arch: &Architecture, target: &str) -> Result<LtlFormula, ModelError> {
        let formula = self.formula();
        match self.target_kind() {
            TargetKind::Component => {
                if arch.known_component(target).is_none() {
                    return Err(ModelError::UnknownComponent(target.to_string()));
                }
                let mut bind = |p: &Proposition| Proposition::grounded(p.name(), target).expect("component ids are identifiers");
                Ok(formula.map_atoms(&mut bind))
            }
            TargetKind::Connector => {
                let k = arch
                    .connector(target)
                    .ok_or_else(|| ModelError::UnknownConnector(target.to_string()))?;
                let mut bind = |p: &Proposition| {
                    let grounded = match p.name() {
                        "isStartedComponent1" => Proposition::grounded("isStarted", &k.source),
                        "isStartedComponent2" => Proposition::grounded("isStarted", &k.target),
                        other => Proposition::grounded(other, target),
                    };
                    grounded.expect("model ids are identifiers")
                };
                Ok(formula.map_atoms(&mut bind))
            }
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateId::Phi1 => "PHI1",
            TemplateId::Phi2 => "PHI2",
            TemplateId::Phi3 => "PHI3",
            TemplateId::Phi4 => "PHI4",
        })
    }
}
