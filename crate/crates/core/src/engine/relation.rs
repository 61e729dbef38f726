//! Deduplicated tuple storage with hash-free column indexes.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::value::Value;

pub(crate) type Row = Arc<[Value]>;

type Index = BTreeMap<Vec<Value>, Vec<Row>>;

#[derive(Clone, Debug, Default)]
pub(crate) struct Relation {
    rows: BTreeSet<Row>,
    /// Keyed by the indexed column list.
    indexes: BTreeMap<Vec<usize>, Index>,
}

fn project(cols: &[usize], row: &Row) -> Vec<Value> {
    cols.iter().map(|&c| row[c].clone()).collect()
}

impl Relation {
    pub(crate) fn from_rows(rows: impl IntoIterator<Item = Row>) -> Self {
        Relation {
            rows: rows.into_iter().collect(),
            indexes: BTreeMap::new(),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.rows.len()
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub(crate) fn contains(&self, row: &[Value]) -> bool {
        self.rows.contains(row)
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter()
    }

    pub(crate) fn insert(&mut self, row: Row) -> bool {
        if !self.rows.insert(row.clone()) {
            return false;
        }
        for (cols, idx) in self.indexes.iter_mut() {
            idx.entry(project(cols, &row))
                .or_default()
                .push(row.clone());
        }
        true
    }

    pub(crate) fn ensure_index(&mut self, cols: &[usize]) {
        if cols.is_empty() || self.indexes.contains_key(cols) {
            return;
        }
        let mut idx = Index::new();
        for row in &self.rows {
            idx.entry(project(cols, row)).or_default().push(row.clone());
        }
        self.indexes.insert(cols.to_vec(), idx);
    }

    /// Rows whose `cols` equal `key`. The index must have been built.
    pub(crate) fn lookup(&self, cols: &[usize], key: &[Value]) -> &[Row] {
        self.indexes
            .get(cols)
            .expect("index prepared before evaluation")
            .get(key)
            .map_or(&[], |v| v.as_slice())
    }
}
