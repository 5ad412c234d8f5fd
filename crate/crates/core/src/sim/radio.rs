use crate::sim::mobility::Point;
use crate::NodeId;

/// Unit-disk radio with a fixed per-hop latency and independent losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioModel {
    /// Meters; nodes exactly at this distance can hear each other.
    pub range: f64,
    /// Seconds from transmission to reception.
    pub per_hop_delay: f64,
    /// Probability that a given receiver misses a given frame.
    pub loss_prob: f64,
}

impl Default for RadioModel {
    fn default() -> Self {
        RadioModel {
            range: 250.0,
            per_hop_delay: 0.002,
            loss_prob: 0.0,
        }
    }
}

pub fn in_range(a: Point, b: Point, range: f64) -> bool {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    dx * dx + dy * dy <= range * range
}

/// Nodes within `range` of `node`, in id order.
pub fn neighbors_of(node: NodeId, positions: &[Point], range: f64) -> Vec<NodeId> {
    let me = positions[node.0 as usize];
    positions
        .iter()
        .enumerate()
        .filter(|&(i, &p)| i as u32 != node.0 && in_range(me, p, range))
        .map(|(i, _)| NodeId(i as u32))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point { x, y }).collect()
    }

    #[test]
    fn boundary_is_inclusive() {
        let p = pts(&[(0.0, 0.0), (250.0, 0.0), (0.0, 250.0001)]);
        assert_eq!(neighbors_of(NodeId(0), &p, 250.0), vec![NodeId(1)]);
        assert_eq!(neighbors_of(NodeId(2), &p, 250.0), vec![]);
    }

    #[test]
    fn diagonal_boundary() {
        // 150-200-250 triangle: exactly at range
        let p = pts(&[(100.0, 100.0), (250.0, 300.0)]);
        assert_eq!(neighbors_of(NodeId(0), &p, 250.0), vec![NodeId(1)]);
    }

    #[test]
    fn lone_node_has_no_neighbors() {
        let p = pts(&[(800.0, 800.0), (0.0, 0.0), (1600.0, 1600.0)]);
        assert!(neighbors_of(NodeId(0), &p, 250.0).is_empty());
    }

    proptest! {
        #[test]
        fn neighborhood_is_symmetric(
            coords in prop::collection::vec((0.0f64..1600.0, 0.0f64..1600.0), 2..40),
            range in 1.0f64..600.0,
        ) {
            let p = pts(&coords);
            for a in 0..p.len() {
                for b in neighbors_of(NodeId(a as u32), &p, range) {
                    prop_assert!(neighbors_of(b, &p, range).contains(&NodeId(a as u32)));
                }
            }
        }
    }
}
