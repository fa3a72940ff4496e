use std::hash::BuildHasher;

use hashbrown::HashTable;
use rustc_hash::FxBuildHasher;

/// Bit position of one variable inside a packed key.
#[derive(Debug, Clone, Copy)]
struct Field {
    word: usize,
    shift: u32,
    mask: u64,
    lo: i64,
}

/// Packs in-domain valuations into fixed-width `u64` words. A field never
/// straddles two words.
#[derive(Debug, Clone)]
pub struct Layout {
    fields: Vec<Field>,
    words: usize,
}

impl Layout {
    pub fn new(domains: &[(i64, i64)]) -> Self {
        let mut fields = Vec::with_capacity(domains.len());
        let (mut word, mut used) = (0usize, 0u32);
        for &(lo, hi) in domains {
            let span = (hi as i128 - lo as i128) as u128;
            let bits = (128 - span.leading_zeros()).max(1);
            let bits = bits.min(64);
            if used + bits > 64 {
                word += 1;
                used = 0;
            }
            let mask = if bits == 64 {
                u64::MAX
            } else {
                (1u64 << bits) - 1
            };
            fields.push(Field {
                word,
                shift: used,
                mask,
                lo,
            });
            used += bits;
        }
        let words = if domains.is_empty() { 1 } else { word + 1 };
        Self { fields, words }
    }

    pub fn words(&self) -> usize {
        self.words
    }

    pub fn pack(&self, values: &[i64], out: &mut [u64]) {
        out.fill(0);
        for (f, &v) in self.fields.iter().zip(values) {
            let offset = v.wrapping_sub(f.lo) as u64;
            out[f.word] |= (offset & f.mask) << f.shift;
        }
    }

    pub fn unpack(&self, key: &[u64], out: &mut Vec<i64>) {
        out.clear();
        out.extend(self.fields.iter().map(|f| self.field(key, f)));
    }

    pub fn value(&self, key: &[u64], var: usize) -> i64 {
        self.field(key, &self.fields[var])
    }

    fn field(&self, key: &[u64], f: &Field) -> i64 {
        f.lo.wrapping_add(((key[f.word] >> f.shift) & f.mask) as i64)
    }
}

/// Insert-if-absent map from valuations to dense ids. Keys live in one flat
/// vector; the hash table only stores ids.
#[derive(Debug, Clone)]
pub struct StateTable {
    layout: Layout,
    keys: Vec<u64>,
    index: HashTable<u32>,
    scratch: Vec<u64>,
}

impl StateTable {
    pub fn new(domains: &[(i64, i64)]) -> Self {
        let layout = Layout::new(domains);
        let scratch = vec![0; layout.words()];
        Self {
            layout,
            keys: Vec::new(),
            index: HashTable::new(),
            scratch,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len() / self.layout.words
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn var_count(&self) -> usize {
        self.layout.fields.len()
    }

    fn key(&self, id: u32) -> &[u64] {
        let w = self.layout.words;
        &self.keys[id as usize * w..(id as usize + 1) * w]
    }

    /// Id of `values`, inserting it if new. `None` once 2^32 - 1 ids are taken.
    pub fn insert(&mut self, values: &[i64]) -> Option<(u32, bool)> {
        let mut key = std::mem::take(&mut self.scratch);
        self.layout.pack(values, &mut key);
        let hash = FxBuildHasher.hash_one(&key[..]);
        let w = self.layout.words;
        let keys = &self.keys;
        let found = self
            .index
            .find(hash, |&id| {
                keys[id as usize * w..(id as usize + 1) * w] == key[..]
            })
            .copied();
        let result = match found {
            Some(id) => Some((id, false)),
            None if self.len() >= u32::MAX as usize => None,
            None => {
                let id = self.len() as u32;
                self.keys.extend_from_slice(&key);
                let keys = &self.keys;
                self.index.insert_unique(hash, id, |&other| {
                    FxBuildHasher.hash_one(&keys[other as usize * w..(other as usize + 1) * w])
                });
                Some((id, true))
            }
        };
        self.scratch = key;
        result
    }

    pub fn get(&self, values: &[i64]) -> Option<u32> {
        let mut key = vec![0; self.layout.words];
        self.layout.pack(values, &mut key);
        let hash = FxBuildHasher.hash_one(&key[..]);
        self.index
            .find(hash, |&id| self.key(id) == &key[..])
            .copied()
    }

    pub fn state_into(&self, id: u32, out: &mut Vec<i64>) {
        self.layout.unpack(self.key(id), out);
    }

    pub fn state(&self, id: u32) -> Vec<i64> {
        let mut out = Vec::new();
        self.state_into(id, &mut out);
        out
    }

    pub fn value(&self, id: u32, var: usize) -> i64 {
        self.layout.value(self.key(id), var)
    }

    /// Approximate heap footprint in bytes.
    pub fn memory_bytes(&self) -> usize {
        self.keys.capacity() * 8 + self.index.capacity() * 5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wide_layouts_split_words() {
        let domains = [(0, 1), (-5, 5), (i64::MIN, i64::MAX), (0, 1000)];
        let l = Layout::new(&domains);
        assert_eq!(l.words(), 3);
        let mut t = StateTable::new(&domains);
        let a = [1, -5, i64::MIN, 1000];
        let b = [0, 5, i64::MAX, 0];
        assert_eq!(t.insert(&a), Some((0, true)));
        assert_eq!(t.insert(&b), Some((1, true)));
        assert_eq!(t.insert(&a), Some((0, false)));
        assert_eq!(t.state(0), a);
        assert_eq!(t.state(1), b);
        assert_eq!(t.get(&b), Some(1));
        assert_eq!(t.value(1, 2), i64::MAX);
    }

    proptest! {
        #[test]
        fn ids_are_a_bijection(states in prop::collection::vec(prop::collection::vec(-3i64..=12, 4), 1..200)) {
            let domains = [(-3, 12); 4];
            let mut t = StateTable::new(&domains);
            let mut seen: Vec<Vec<i64>> = Vec::new();
            for s in &states {
                let (id, fresh) = t.insert(s).unwrap();
                match seen.iter().position(|x| x == s) {
                    Some(i) => prop_assert_eq!((id as usize, fresh), (i, false)),
                    None => {
                        prop_assert_eq!((id as usize, fresh), (seen.len(), true));
                        seen.push(s.clone());
                    }
                }
            }
            for (i, s) in seen.iter().enumerate() {
                prop_assert_eq!(&t.state(i as u32), s);
            }
        }
    }
}
