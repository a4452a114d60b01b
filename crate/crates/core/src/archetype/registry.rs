use std::collections::BTreeMap;

use thiserror::Error;

use super::ArchetypeDefinition;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("archetype {0:?} not registered")]
    NotFound(String),
    #[error("archetype {id:?} conflicts with registered version v{current}")]
    VersionConflict { id: String, current: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegisterOutcome {
    /// First definition of its lineage, or a higher version replacing the previous head.
    Added,
    /// Identical definition already registered under the same id.
    Unchanged,
}

/// In-memory archetype registry keyed by id.
///
/// Older versions stay resolvable so entries recorded against them can still be
/// read; [`Registry::latest`] follows the highest version of a lineage.
#[derive(Debug, Default, Clone)]
pub struct Registry {
    by_id: BTreeMap<String, ArchetypeDefinition>,
    heads: BTreeMap<String, u32>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Checks whether `def` could be registered without changing anything.
    pub fn check(&self, def: &ArchetypeDefinition) -> Result<RegisterOutcome, RegistryError> {
        if let Some(existing) = self.by_id.get(&def.archetype_id) {
            if existing == def {
                return Ok(RegisterOutcome::Unchanged);
            }
        }
        let id = def.id();
        match self.heads.get(&id.lineage()) {
            Some(&current) if id.version <= current => Err(RegistryError::VersionConflict {
                id: def.archetype_id.clone(),
                current,
            }),
            _ => Ok(RegisterOutcome::Added),
        }
    }

    pub fn register(&mut self, def: ArchetypeDefinition) -> Result<RegisterOutcome, RegistryError> {
        let outcome = self.check(&def)?;
        if outcome == RegisterOutcome::Added {
            let id = def.id();
            self.heads.insert(id.lineage(), id.version);
            self.by_id.insert(def.archetype_id.clone(), def);
        }
        Ok(outcome)
    }

    pub fn resolve(&self, archetype_id: &str) -> Result<&ArchetypeDefinition, RegistryError> {
        self.by_id
            .get(archetype_id)
            .ok_or_else(|| RegistryError::NotFound(archetype_id.to_owned()))
    }

    /// Highest registered version sharing `archetype_id`'s lineage.
    pub fn latest(&self, archetype_id: &str) -> Option<&ArchetypeDefinition> {
        let id = super::ArchetypeId::parse(archetype_id).ok()?;
        let version = self.heads.get(&id.lineage())?;
        self.by_id
            .get(&format!("{}.v{}", id.lineage(), version))
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ArchetypeDefinition> {
        self.by_id.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archetype::parse_archetype;

    fn def(version: u32, extra: &str) -> ArchetypeDefinition {
        parse_archetype(&format!(
            "archetype openEHR-EHR-OBSERVATION.bp.v{version}\nkind OBSERVATION\nfield sys quantity required\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn resolve_and_not_found() {
        let mut r = Registry::new();
        assert_eq!(r.register(def(1, "")), Ok(RegisterOutcome::Added));
        assert_eq!(r.resolve("openEHR-EHR-OBSERVATION.bp.v1").unwrap().fields.len(), 1);
        assert_eq!(
            r.resolve("openEHR-EHR-OBSERVATION.nope.v1"),
            Err(RegistryError::NotFound("openEHR-EHR-OBSERVATION.nope.v1".into()))
        );
    }

    #[test]
    fn versioning() {
        let mut r = Registry::new();
        r.register(def(2, "")).unwrap();
        assert_eq!(r.register(def(2, "")), Ok(RegisterOutcome::Unchanged));
        assert!(matches!(
            r.register(def(2, "field dia quantity optional\n")),
            Err(RegistryError::VersionConflict { current: 2, .. })
        ));
        assert!(matches!(
            r.register(def(1, "")),
            Err(RegistryError::VersionConflict { current: 2, .. })
        ));
        assert_eq!(
            r.register(def(3, "field dia quantity optional\n")),
            Ok(RegisterOutcome::Added)
        );
        assert_eq!(
            r.latest("openEHR-EHR-OBSERVATION.bp.v2").unwrap().archetype_id,
            "openEHR-EHR-OBSERVATION.bp.v3"
        );
        // superseded versions stay resolvable
        assert!(r.resolve("openEHR-EHR-OBSERVATION.bp.v2").is_ok());
        assert_eq!(r.len(), 2);
    }
}
