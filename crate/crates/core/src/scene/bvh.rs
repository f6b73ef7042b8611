use crate::geom::{Aabb, Point, Vector};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct BvhNode {
    bounds: Aabb,
    left: u32,
    right: u32,
    parent: u32,
    item: u32,
}

/// Bounding volume hierarchy with exactly one item per leaf. Leaves keep
/// parent links so bounds can be refitted after an item moves.
#[derive(Debug, Clone, Default)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    leaf_of: Vec<u32>,
}

impl Bvh {
    pub fn build(bounds: &[Aabb]) -> Bvh {
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * bounds.len()),
            leaf_of: vec![NONE; bounds.len()],
        };
        if !bounds.is_empty() {
            let mut items: Vec<u32> = (0..bounds.len() as u32).collect();
            bvh.split(bounds, &mut items, NONE);
        }
        bvh
    }

    fn split(&mut self, bounds: &[Aabb], items: &mut [u32], parent: u32) -> u32 {
        let id = self.nodes.len() as u32;
        if let [item] = items {
            self.nodes.push(BvhNode {
                bounds: bounds[*item as usize],
                left: NONE,
                right: NONE,
                parent,
                item: *item,
            });
            self.leaf_of[*item as usize] = id;
            return id;
        }
        let centroid = |i: u32| {
            let b = &bounds[i as usize];
            if b.is_empty() {
                Point::origin()
            } else {
                b.center()
            }
        };
        let cb = Aabb::from_points(items.iter().map(|&i| centroid(i)).collect::<Vec<_>>().iter());
        let axis = (0..3)
            .max_by(|&a, &b| (cb.max[a] - cb.min[a]).total_cmp(&(cb.max[b] - cb.min[b])))
            .unwrap_or(0);
        items.sort_by(|&a, &b| centroid(a)[axis].total_cmp(&centroid(b)[axis]).then(a.cmp(&b)));
        self.nodes.push(BvhNode {
            bounds: Aabb::empty(),
            left: NONE,
            right: NONE,
            parent,
            item: NONE,
        });
        let mid = items.len() / 2;
        let (l, r) = items.split_at_mut(mid);
        let left = self.split(bounds, l, id);
        let right = self.split(bounds, r, id);
        let bounds = self.nodes[left as usize].bounds.union(&self.nodes[right as usize].bounds);
        let node = &mut self.nodes[id as usize];
        node.left = left;
        node.right = right;
        node.bounds = bounds;
        id
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.item != NONE).count()
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes.first().map_or(Aabb::empty(), |n| n.bounds)
    }

    /// Replace an item's bounds and refit its ancestors.
    pub fn refit(&mut self, item: usize, bounds: Aabb) {
        let mut id = self.leaf_of[item];
        self.nodes[id as usize].bounds = bounds;
        id = self.nodes[id as usize].parent;
        while id != NONE {
            let n = &self.nodes[id as usize];
            let b = self.nodes[n.left as usize].bounds.union(&self.nodes[n.right as usize].bounds);
            self.nodes[id as usize].bounds = b;
            id = self.nodes[id as usize].parent;
        }
    }

    /// Visit every item whose bounds, inflated by `pad`, contain `p`.
    pub fn visit_point(&self, p: &Point, pad: f64, mut f: impl FnMut(usize)) {
        self.visit_where(|b| b.inflate(pad).contains(p), &mut f);
    }

    /// Visit every item whose bounds overlap `q`.
    pub fn visit_overlapping(&self, q: &Aabb, mut f: impl FnMut(usize)) {
        self.visit_where(|b| b.overlaps(q), &mut f);
    }

    fn visit_where(&self, test: impl Fn(&Aabb) -> bool, f: &mut impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id as usize];
            if !test(&n.bounds) {
                continue;
            }
            if n.item != NONE {
                f(n.item as usize);
            } else {
                stack.push(n.right);
                stack.push(n.left);
            }
        }
    }

    /// Visit items whose bounds the ray enters before the current best
    /// distance (plus 1e-9 for ties), nearer boxes first. The callback returns the new best
    /// distance.
    pub fn visit_ray(&self, origin: &Point, dir: &Vector, mut f: impl FnMut(usize, f64) -> f64) {
        if self.nodes.is_empty() {
            return;
        }
        let inv = dir.map(|c| 1.0 / c);
        let mut best = f64::INFINITY;
        let mut stack = vec![(0u32, 0.0f64)];
        while let Some((id, entry)) = stack.pop() {
            if entry > best + 1e-9 {
                continue;
            }
            let n = &self.nodes[id as usize];
            if n.item != NONE {
                best = f(n.item as usize, best);
                continue;
            }
            let hit = |c: u32| {
                self.nodes[c as usize]
                    .bounds
                    .inflate(1e-9)
                    .ray_entry(origin, &inv, best + 1e-9)
                    .map(|t| (c, t))
            };
            match (hit(n.left), hit(n.right)) {
                (Some(a), Some(b)) => {
                    let (near, far) = if a.1 <= b.1 { (a, b) } else { (b, a) };
                    stack.push(far);
                    stack.push(near);
                }
                (Some(a), None) | (None, Some(a)) => stack.push(a),
                (None, None) => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_at(x: f64) -> Aabb {
        Aabb {
            min: [x - 0.5, -0.5, -0.5],
            max: [x + 0.5, 0.5, 0.5],
        }
    }

    #[test]
    fn one_leaf_per_item_and_refit() {
        let boxes: Vec<Aabb> = (0..1000).map(|i| unit_at(i as f64 * 2.0)).collect();
        let mut bvh = Bvh::build(&boxes);
        assert_eq!(bvh.leaf_count(), 1000);
        let mut hits = vec![];
        bvh.visit_point(&Point::new(10.0, 0.0, 0.0), 0.0, |i| hits.push(i));
        assert_eq!(hits, [5]);
        bvh.refit(5, unit_at(-100.0));
        hits.clear();
        bvh.visit_point(&Point::new(-100.0, 0.0, 0.0), 0.0, |i| hits.push(i));
        assert_eq!(hits, [5]);
        assert_eq!(bvh.bounds().min[0], -100.5);
    }

    #[test]
    fn ray_visits_near_first() {
        let boxes: Vec<Aabb> = (0..64).map(|i| unit_at(i as f64 * 2.0)).collect();
        let bvh = Bvh::build(&boxes);
        let mut order = vec![];
        bvh.visit_ray(&Point::new(-10.0, 0.0, 0.0), &Vector::x(), |i, best| {
            order.push(i);
            best.min(boxes[i].min[0] + 10.0)
        });
        assert_eq!(order[0], 0);
        assert!(order.len() < 4, "{order:?}");
    }

    #[test]
    fn empty_tree() {
        let bvh = Bvh::build(&[]);
        assert_eq!(bvh.leaf_count(), 0);
        bvh.visit_point(&Point::origin(), 1.0, |_| panic!("no items"));
    }
}
