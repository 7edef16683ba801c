//! Attachment hierarchy maintained from a stream of agent actions.
//!
//! An attach verb applied to `(child, parent)` adds the edge; its registered
//! detach verb removes it again, but only if that exact edge is present. Each
//! child has at most one parent and the edges always form a forest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FrameIndex;

/// Anything usable as a symbol in the hierarchy: object names in scripts,
/// anchor ids inside the tracker.
pub trait Symbol: Clone + Ord + fmt::Display + fmt::Debug {}

impl<T: Clone + Ord + fmt::Display + fmt::Debug> Symbol for T {}

/// `verb(child, parent)` observed at `frame`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionEvent<S> {
    pub frame: FrameIndex,
    pub verb: String,
    pub child: S,
    pub parent: S,
}

impl<S: Symbol> ActionEvent<S> {
    pub fn new(frame: FrameIndex, verb: &str, child: S, parent: S) -> Result<Self> {
        if child == parent {
            return Err(Error::SelfAttachment(child.to_string()));
        }
        Ok(Self {
            frame,
            verb: verb.to_string(),
            child,
            parent,
        })
    }

    /// Same event over a different symbol space.
    pub fn map<T>(&self, mut f: impl FnMut(&S) -> T) -> ActionEvent<T> {
        ActionEvent {
            frame: self.frame,
            verb: self.verb.clone(),
            child: f(&self.child),
            parent: f(&self.parent),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerbRole {
    Attach,
    Detach,
}

/// Domain-supplied `(attach verb, detach verb)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(String, String)>", into = "Vec<(String, String)>")]
pub struct AttachDetachRegistry {
    pairs: Vec<(String, String)>,
    roles: BTreeMap<String, VerbRole>,
}

impl AttachDetachRegistry {
    pub fn new<I, A, D>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, D)>,
        A: Into<String>,
        D: Into<String>,
    {
        let mut out = Self {
            pairs: Vec::new(),
            roles: BTreeMap::new(),
        };
        for (a, d) in pairs {
            let (a, d) = (a.into(), d.into());
            for (verb, role) in [(&a, VerbRole::Attach), (&d, VerbRole::Detach)] {
                if verb.is_empty() || verb.chars().any(char::is_whitespace) {
                    return Err(Error::Invalid(format!("bad verb `{verb}` in registry")));
                }
                if out.roles.insert(verb.clone(), role).is_some() {
                    return Err(Error::Invalid(format!(
                        "verb `{verb}` appears more than once in the registry"
                    )));
                }
            }
            out.pairs.push((a, d));
        }
        Ok(out)
    }

    /// `{(contain, pick&place)}`: containment by cones, released by the
    /// cone's next pick-and-place.
    pub fn containment() -> Self {
        Self::new([("contain", "pick&place")]).expect("static registry")
    }

    /// Registry for the gearbox assembly domain.
    pub fn gearbox() -> Self {
        Self::new([
            ("pick-up", "put-down"),
            ("screw-in", "unscrew"),
            ("insert", "take-out"),
        ])
        .expect("static registry")
    }

    pub fn role(&self, verb: &str) -> Option<VerbRole> {
        self.roles.get(verb).copied()
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }
}

impl Default for AttachDetachRegistry {
    fn default() -> Self {
        Self::containment()
    }
}

impl TryFrom<Vec<(String, String)>> for AttachDetachRegistry {
    type Error = Error;

    fn try_from(pairs: Vec<(String, String)>) -> Result<Self> {
        Self::new(pairs)
    }
}

impl From<AttachDetachRegistry> for Vec<(String, String)> {
    fn from(r: AttachDetachRegistry) -> Self {
        r.pairs
    }
}

/// What an action did to the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    Attached,
    Detached,
    Unchanged,
}

/// Forest of `child -> parent` edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachmentHierarchy<S: Ord> {
    parents: BTreeMap<S, S>,
}

impl<S: Ord> Default for AttachmentHierarchy<S> {
    fn default() -> Self {
        Self {
            parents: BTreeMap::new(),
        }
    }
}

impl<S: Symbol> AttachmentHierarchy<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, child: &S) -> Option<&S> {
        self.parents.get(child)
    }

    pub fn contains_edge(&self, child: &S, parent: &S) -> bool {
        self.parents.get(child) == Some(parent)
    }

    /// Edges as `(child, parent)`, ordered by child.
    pub fn edges(&self) -> impl Iterator<Item = (&S, &S)> {
        self.parents.iter()
    }

    pub fn edge_set(&self) -> BTreeSet<(S, S)> {
        self.parents
            .iter()
            .map(|(c, p)| (c.clone(), p.clone()))
            .collect()
    }

    pub fn children<'a>(&'a self, parent: &'a S) -> impl Iterator<Item = &'a S> + 'a {
        self.parents
            .iter()
            .filter(move |(_, p)| *p == parent)
            .map(|(c, _)| c)
    }

    /// Walks child -> parent, excluding `node` itself.
    pub fn ancestors<'a>(&'a self, node: &'a S) -> Ancestors<'a, S> {
        Ancestors {
            hierarchy: self,
            next: self.parents.get(node),
        }
    }

    pub fn depth(&self, node: &S) -> usize {
        self.ancestors(node).count()
    }

    /// Top of `node`'s attachment chain; `node` itself when unattached.
    pub fn root<'a>(&'a self, node: &'a S) -> &'a S {
        self.ancestors(node).last().unwrap_or(node)
    }

    pub fn is_descendant(&self, node: &S, ancestor: &S) -> bool {
        self.ancestors(node).any(|a| a == ancestor)
    }

    /// Adds `child -> parent`. Re-attaching to the same parent is a no-op.
    pub fn attach(&mut self, child: S, parent: S) -> Result<Effect> {
        if child == parent {
            return Err(Error::SelfAttachment(child.to_string()));
        }
        if let Some(existing) = self.parents.get(&child) {
            if *existing == parent {
                return Ok(Effect::Unchanged);
            }
            return Err(Error::AlreadyAttached {
                child: child.to_string(),
                parent: existing.to_string(),
            });
        }
        if self.is_descendant(&parent, &child) {
            return Err(Error::CycleRejected {
                child: child.to_string(),
                parent: parent.to_string(),
            });
        }
        self.parents.insert(child, parent);
        Ok(Effect::Attached)
    }

    /// Removes the exact edge `child -> parent` if present.
    pub fn detach(&mut self, child: &S, parent: &S) -> Effect {
        if self.contains_edge(child, parent) {
            self.parents.remove(child);
            Effect::Detached
        } else {
            Effect::Unchanged
        }
    }

    /// Drops every edge touching `node`; its children become roots.
    pub fn remove_node(&mut self, node: &S) {
        self.parents.remove(node);
        self.parents.retain(|_, p| p != node);
    }

    /// In-place form of [`apply_action`].
    pub fn apply(&mut self, event: &ActionEvent<S>, registry: &AttachDetachRegistry) -> Result<Effect> {
        match registry.role(&event.verb) {
            Some(VerbRole::Attach) => self.attach(event.child.clone(), event.parent.clone()),
            Some(VerbRole::Detach) => Ok(self.detach(&event.child, &event.parent)),
            None => Ok(Effect::Unchanged),
        }
    }

    /// Checks the forest invariants. Used by tests and fuzzing.
    pub fn is_forest(&self) -> bool {
        self.parents.keys().all(|start| {
            let mut steps = 0;
            let mut cur = start;
            while let Some(p) = self.parents.get(cur) {
                if p == start || steps > self.parents.len() {
                    return false;
                }
                cur = p;
                steps += 1;
            }
            true
        })
    }
}

pub struct Ancestors<'a, S: Ord> {
    hierarchy: &'a AttachmentHierarchy<S>,
    next: Option<&'a S>,
}

impl<'a, S: Ord> Iterator for Ancestors<'a, S> {
    type Item = &'a S;

    fn next(&mut self) -> Option<&'a S> {
        let cur = self.next?;
        self.next = self.hierarchy.parents.get(cur);
        Some(cur)
    }
}

/// One step of hierarchy generation: returns the hierarchy after `event`.
pub fn apply_action<S: Symbol>(
    hierarchy: &AttachmentHierarchy<S>,
    event: &ActionEvent<S>,
    registry: &AttachDetachRegistry,
) -> Result<AttachmentHierarchy<S>> {
    let mut next = hierarchy.clone();
    next.apply(event, registry)?;
    Ok(next)
}

/// Hierarchy in effect at each of `n_frames` frames.
///
/// An edge attached at `t` and detached at `T` is present on frames
/// `t..T`; edges never detached persist to the last frame. Actions sharing a
/// frame are applied in input order.
pub fn hierarchy_timeline<S: Symbol>(
    actions: &[ActionEvent<S>],
    registry: &AttachDetachRegistry,
    n_frames: usize,
) -> Result<Vec<AttachmentHierarchy<S>>> {
    if let Some(w) = actions.windows(2).find(|w| w[1].frame < w[0].frame) {
        return Err(Error::Invalid(format!(
            "actions not sorted by frame ({} after {})",
            w[1].frame, w[0].frame
        )));
    }
    if let Some(a) = actions.iter().find(|a| a.frame >= n_frames) {
        return Err(Error::Invalid(format!(
            "action at frame {} outside [0, {n_frames})",
            a.frame
        )));
    }
    let mut out = Vec::with_capacity(n_frames);
    let mut current = AttachmentHierarchy::new();
    let mut pending = actions.iter().peekable();
    for t in 0..n_frames {
        while let Some(a) = pending.next_if(|a| a.frame == t) {
            current.apply(a, registry).map_err(|e| e.at_frame(t))?;
        }
        out.push(current.clone());
    }
    Ok(out)
}

/// Nearest ancestor of `node` (walking child -> parent) that is anchored.
pub fn highest_anchored_ancestor<S: Symbol>(
    hierarchy: &AttachmentHierarchy<S>,
    node: &S,
    anchored: &BTreeSet<S>,
) -> Option<S> {
    hierarchy
        .ancestors(node)
        .find(|a| anchored.contains(*a))
        .cloned()
}
