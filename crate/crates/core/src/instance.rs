use serde::Serialize;

use crate::catalog::ItemCatalog;
use crate::cost::CostModel;
use crate::demand::DemandProfile;
use crate::error::{Error, Result};

/// Catalog, demand profile and cost model of one problem, cross-checked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    pub catalog: ItemCatalog,
    pub profile: DemandProfile,
    pub cost: CostModel,
}

impl Instance {
    pub fn new(catalog: ItemCatalog, profile: DemandProfile, cost: CostModel) -> Result<Self> {
        if profile.items() != catalog.len() {
            return Err(Error::Invalid(format!(
                "profile has {} items but the catalog has {}",
                profile.items(),
                catalog.len()
            )));
        }
        if profile.slots() == 0 {
            return Err(Error::Invalid("cycle must contain at least one slot".into()));
        }
        Ok(Self {
            catalog,
            profile,
            cost,
        })
    }

    pub fn users(&self) -> usize {
        self.profile.users()
    }

    pub fn slots(&self) -> usize {
        self.profile.slots()
    }

    pub fn items(&self) -> usize {
        self.profile.items()
    }

    /// Same catalog and cost with a different profile of equal dimensions.
    pub fn with_profile(&self, profile: DemandProfile) -> Result<Self> {
        if profile.probs().dims() != self.profile.probs().dims() {
            return Err(Error::Invalid("replacement profile has different dimensions".into()));
        }
        Ok(Self {
            catalog: self.catalog.clone(),
            profile,
            cost: self.cost.clone(),
        })
    }
}
