//! Random waypoint mobility.

use rand::Rng;

use super::types::{Mobility, NodeState, ScenarioConfig, Vec2};

const ARRIVAL_EPS: f64 = 1e-9;

pub(crate) fn draw_speed(mobility: &Mobility, rng: &mut impl Rng) -> f64 {
    match mobility {
        Mobility::RandomWaypoint {
            speed_min, speed_max, ..
        } => {
            if speed_max > speed_min {
                rng.gen_range(*speed_min..*speed_max)
            } else {
                *speed_min
            }
        }
    }
}

pub(crate) fn draw_point(l: f64, rng: &mut impl Rng) -> Vec2 {
    Vec2::new(rng.gen_range(0.0..=l), rng.gen_range(0.0..=l))
}

fn heading(from: Vec2, to: Vec2, speed: f64) -> Vec2 {
    let d = from.dist(to);
    if d < ARRIVAL_EPS {
        Vec2::ZERO
    } else {
        Vec2::new((to.x - from.x) / d * speed, (to.y - from.y) / d * speed)
    }
}

/// Starts a new leg: fresh waypoint and speed, velocity pointed at the waypoint.
pub(crate) fn new_leg(node: &mut NodeState, sc: &ScenarioConfig, rng: &mut impl Rng) {
    node.waypoint = draw_point(sc.l, rng);
    let speed = draw_speed(&sc.mobility, rng);
    node.velocity = heading(node.position, node.waypoint, speed);
}

/// Advances every alive node one step of `dt` along its current leg.
///
/// A node sitting on its waypoint first draws a new leg and then moves along
/// it; arriving nodes stop exactly on the waypoint and serve the configured
/// pause. Dead nodes do not move.
pub fn step_mobility(nodes: &mut [NodeState], sc: &ScenarioConfig, rng: &mut impl Rng) {
    let dt = sc.energy.dt;
    let Mobility::RandomWaypoint { pause, .. } = sc.mobility;
    for node in nodes.iter_mut() {
        if !node.alive {
            node.velocity = Vec2::ZERO;
            continue;
        }
        if node.pause_left > 0.0 {
            node.pause_left -= dt;
            if node.pause_left > ARRIVAL_EPS {
                node.velocity = Vec2::ZERO;
                continue;
            }
            node.pause_left = 0.0;
        }
        if node.position.dist(node.waypoint) < ARRIVAL_EPS {
            new_leg(node, sc, rng);
        } else if node.velocity == Vec2::ZERO {
            // resuming after a pause keeps the leg but needs a speed
            let speed = draw_speed(&sc.mobility, rng);
            node.velocity = heading(node.position, node.waypoint, speed);
        }
        let speed = node.velocity.norm();
        let remaining = node.position.dist(node.waypoint);
        let travel = speed * dt;
        if travel >= remaining && speed > 0.0 {
            node.position = node.waypoint;
            if pause > 0.0 {
                node.pause_left = pause;
                node.velocity = Vec2::ZERO;
            }
        } else {
            node.position.x += node.velocity.x * dt;
            node.position.y += node.velocity.y * dt;
        }
        node.position.x = node.position.x.clamp(0.0, sc.l);
        node.position.y = node.position.y.clamp(0.0, sc.l);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn node(p: Vec2, wp: Vec2) -> NodeState {
        NodeState {
            position: p,
            velocity: Vec2::ZERO,
            energy: 10.0,
            ch_flag: false,
            alive: true,
            cluster_id: -1,
            waypoint: wp,
            pause_left: 0.0,
        }
    }

    fn scenario(speed: (f64, f64), pause: f64) -> ScenarioConfig {
        ScenarioConfig {
            mobility: Mobility::RandomWaypoint {
                speed_min: speed.0,
                speed_max: speed.1,
                pause,
            },
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn node_on_waypoint_draws_new_leg() {
        let sc = scenario((2.0, 2.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Vec2::new(500.0, 500.0);
        let mut nodes = vec![node(p, p)];
        step_mobility(&mut nodes, &sc, &mut rng);
        assert_ne!(nodes[0].waypoint, p);
        assert!((nodes[0].position.dist(p) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_speed_is_static() {
        let sc = scenario((0.0, 0.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut nodes: Vec<NodeState> = (0..10)
            .map(|_| {
                let mut n = node(draw_point(sc.l, &mut rng), Vec2::ZERO);
                new_leg(&mut n, &sc, &mut rng);
                n
            })
            .collect();
        let start: Vec<Vec2> = nodes.iter().map(|n| n.position).collect();
        for _ in 0..100 {
            step_mobility(&mut nodes, &sc, &mut rng);
        }
        let end: Vec<Vec2> = nodes.iter().map(|n| n.position).collect();
        assert_eq!(start, end);
    }

    #[test]
    fn arrival_stops_on_waypoint_and_pauses() {
        let sc = scenario((10.0, 10.0), 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut n = node(Vec2::new(0.0, 0.0), Vec2::new(15.0, 0.0));
        n.velocity = Vec2::new(10.0, 0.0);
        let mut nodes = vec![n];
        step_mobility(&mut nodes, &sc, &mut rng);
        assert_eq!(nodes[0].position, Vec2::new(10.0, 0.0));
        step_mobility(&mut nodes, &sc, &mut rng);
        assert_eq!(nodes[0].position, Vec2::new(15.0, 0.0));
        assert_eq!(nodes[0].pause_left, 3.0);
        for _ in 0..2 {
            step_mobility(&mut nodes, &sc, &mut rng);
            assert_eq!(nodes[0].position, Vec2::new(15.0, 0.0));
        }
        step_mobility(&mut nodes, &sc, &mut rng);
        assert_ne!(nodes[0].position, Vec2::new(15.0, 0.0));
    }

    #[test]
    fn dead_nodes_frozen_and_positions_in_bounds() {
        let sc = scenario((5.0, 20.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut nodes: Vec<NodeState> = (0..20)
            .map(|_| {
                let mut n = node(draw_point(sc.l, &mut rng), Vec2::ZERO);
                new_leg(&mut n, &sc, &mut rng);
                n
            })
            .collect();
        nodes[0].kill();
        let p0 = nodes[0].position;
        for _ in 0..500 {
            step_mobility(&mut nodes, &sc, &mut rng);
            for n in &nodes {
                assert!((0.0..=sc.l).contains(&n.position.x) && (0.0..=sc.l).contains(&n.position.y));
            }
        }
        assert_eq!(nodes[0].position, p0);
    }
}
