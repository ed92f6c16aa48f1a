//! Named seeds derived from the master seed.

use std::collections::BTreeMap;

use debias_cbm::numkit::derive_seed;

use crate::error::CliError;

/// Maps each label to `derive_seed(master, label)`. The result depends only
/// on the label set, not on its order; repeated labels are rejected.
pub fn resolve_seeds(master: u64, labels: &[&str]) -> Result<BTreeMap<String, u64>, CliError> {
    let mut out = BTreeMap::new();
    for &label in labels {
        if out
            .insert(label.to_string(), derive_seed(master, label))
            .is_some()
        {
            return Err(CliError::Config(format!(
                "seed label `{label}` requested twice"
            )));
        }
    }
    Ok(out)
}
