/// Disjoint-set forest with path compression and union by rank.
///
/// `reset` is O(1): every slot carries the epoch it was last touched in, and a
/// slot from an older epoch reads as a fresh singleton.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
    size: Vec<u32>,
    stamp: Vec<u32>,
    epoch: u32,
    components: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
            size: vec![1; n],
            stamp: vec![0; n],
            epoch: 0,
            components: n,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Return every element to its own singleton set.
    pub fn reset(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            // Stamps wrapped around; clear them explicitly once.
            self.stamp.iter_mut().for_each(|s| *s = u32::MAX);
        }
        self.components = self.parent.len();
    }

    /// Append a fresh singleton and return its id.
    pub fn push(&mut self) -> usize {
        let id = self.parent.len();
        self.parent.push(id as u32);
        self.rank.push(0);
        self.size.push(1);
        self.stamp.push(self.epoch);
        self.components += 1;
        id
    }

    #[inline]
    fn touch(&mut self, x: usize) {
        if self.stamp[x] != self.epoch {
            self.stamp[x] = self.epoch;
            self.parent[x] = x as u32;
            self.rank[x] = 0;
            self.size[x] = 1;
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        self.touch(x);
        let mut root = x;
        while self.parent[root] as usize != root {
            root = self.parent[root] as usize;
        }
        let mut cur = x;
        while cur != root {
            let next = self.parent[cur] as usize;
            self.parent[cur] = root as u32;
            cur = next;
        }
        root
    }

    /// Merge the sets of `a` and `b`; returns false if already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return false;
        }
        let (hi, lo) = if self.rank[ra] >= self.rank[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[lo] = hi as u32;
        self.size[hi] += self.size[lo];
        if self.rank[hi] == self.rank[lo] {
            self.rank[hi] += 1;
        }
        self.components -= 1;
        true
    }

    pub fn connected(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    /// Size of the set containing `x`.
    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r] as usize
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Canonical labels: each element maps to the smallest member of its set.
    pub fn labels(&mut self) -> Vec<usize> {
        let n = self.len();
        let mut min_of_root = vec![usize::MAX; n];
        let roots: Vec<usize> = (0..n).map(|x| self.find(x)).collect();
        for (x, &r) in roots.iter().enumerate() {
            min_of_root[r] = min_of_root[r].min(x);
        }
        roots.iter().map(|&r| min_of_root[r]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_and_reset() {
        let mut uf = UnionFind::new(6);
        assert!(uf.union(0, 1));
        assert!(uf.union(1, 2));
        assert!(!uf.union(0, 2));
        assert_eq!(uf.components(), 4);
        assert_eq!(uf.set_size(2), 3);
        assert_eq!(uf.labels(), vec![0, 0, 0, 3, 4, 5]);
        uf.reset();
        assert_eq!(uf.components(), 6);
        assert!(!uf.connected(0, 1));
        assert_eq!(uf.set_size(0), 1);
    }

    #[test]
    fn push_adds_singleton() {
        let mut uf = UnionFind::new(2);
        uf.union(0, 1);
        let id = uf.push();
        assert_eq!(id, 2);
        assert_eq!(uf.components(), 2);
        assert!(!uf.connected(0, 2));
    }

    #[test]
    fn find_is_idempotent() {
        let mut uf = UnionFind::new(10);
        for i in 0..9 {
            uf.union(i, i + 1);
        }
        let r = uf.find(9);
        assert_eq!(uf.find(r), r);
        assert_eq!(uf.find(0), r);
    }
}
