//! Multiply-accumulate accounting.
//!
//! Every matrix product executed through this crate reports its MAC count
//! here. Counting is opt-in: nothing is recorded unless a [`measure`] scope
//! is active on the current thread. Scopes nest, and a product executed in
//! an inner scope is attributed to every enclosing scope as well.
//!
//! Products can additionally be attributed to a tag (see [`tagged`]), which
//! is how attention-score work is separated from projections and MLPs.

use std::cell::RefCell;
use std::collections::BTreeMap;

/// Tag used for the products that form and apply attention maps.
pub const ATTENTION: &str = "attention";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlopCounter {
    mac_count: u64,
    by_tag: BTreeMap<&'static str, u64>,
}

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Total multiply-accumulates recorded.
    pub fn mac_count(&self) -> u64 {
        self.mac_count
    }

    /// MACs recorded while `tag` was the innermost active tag.
    pub fn tagged(&self, tag: &str) -> u64 {
        self.by_tag.get(tag).copied().unwrap_or(0)
    }

    pub fn tags(&self) -> impl Iterator<Item = (&'static str, u64)> + '_ {
        self.by_tag.iter().map(|(k, v)| (*k, *v))
    }

    pub fn add(&mut self, macs: u64, tag: Option<&'static str>) {
        self.mac_count += macs;
        if let Some(tag) = tag {
            *self.by_tag.entry(tag).or_insert(0) += macs;
        }
    }

    pub fn merge(&mut self, other: &FlopCounter) {
        self.mac_count += other.mac_count;
        for (tag, macs) in &other.by_tag {
            *self.by_tag.entry(tag).or_insert(0) += macs;
        }
    }
}

thread_local! {
    static ACTIVE: RefCell<Vec<FlopCounter>> = const { RefCell::new(Vec::new()) };
    static TAGS: RefCell<Vec<&'static str>> = const { RefCell::new(Vec::new()) };
}

struct ScopeGuard;

impl Drop for ScopeGuard {
    fn drop(&mut self) {
        ACTIVE.with(|a| {
            a.borrow_mut().pop();
        });
    }
}

struct TagGuard;

impl Drop for TagGuard {
    fn drop(&mut self) {
        TAGS.with(|t| {
            t.borrow_mut().pop();
        });
    }
}

/// Run `f` and return its result with the MACs it performed on this thread.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, FlopCounter) {
    ACTIVE.with(|a| a.borrow_mut().push(FlopCounter::new()));
    let guard = ScopeGuard;
    let out = f();
    let counter = ACTIVE.with(|a| a.borrow().last().cloned().unwrap_or_default());
    drop(guard);
    (out, counter)
}

/// Attribute MACs performed inside `f` to `tag`.
pub fn tagged<R>(tag: &'static str, f: impl FnOnce() -> R) -> R {
    TAGS.with(|t| t.borrow_mut().push(tag));
    let _guard = TagGuard;
    f()
}

/// Record `macs` multiply-accumulates against every active scope.
pub fn record_macs(macs: u64) {
    ACTIVE.with(|a| {
        let mut active = a.borrow_mut();
        if active.is_empty() {
            return;
        }
        let tag = TAGS.with(|t| t.borrow().last().copied());
        for counter in active.iter_mut() {
            counter.add(macs, tag);
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_recorded_outside_scope() {
        record_macs(10);
        let ((), c) = measure(|| ());
        assert_eq!(c.mac_count(), 0);
    }

    #[test]
    fn nested_scopes_and_tags() {
        let (inner, outer) = measure(|| {
            record_macs(3);
            let ((), inner) = measure(|| tagged(ATTENTION, || record_macs(5)));
            inner
        });
        assert_eq!(inner.mac_count(), 5);
        assert_eq!(inner.tagged(ATTENTION), 5);
        assert_eq!(outer.mac_count(), 8);
        assert_eq!(outer.tagged(ATTENTION), 5);
        assert_eq!(outer.tagged("other"), 0);
    }
}
