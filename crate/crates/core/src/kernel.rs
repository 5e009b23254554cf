//! Deterministic discrete-event engine.
//!
//! A [`Simulation`] owns a clock, a priority queue of [`SimEvent`]s and a
//! registry of [`Entity`] handlers. Events are dispatched in
//! `(fire_time, sequence)` order, where `sequence` is a per-run insertion
//! counter, so two runs fed the same entities, initial events and seed
//! produce the same dispatch trace.

use std::any::Any;
use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulated wall-clock time in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics if `secs` is negative or not finite.
    pub fn from_secs(secs: f64) -> Self {
        assert!(
            secs.is_finite() && secs >= 0.0,
            "simulation time must be finite and non-negative, got {secs}"
        );
        SimTime(secs)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn after(self, delay: f64) -> Self {
        SimTime::from_secs(self.0 + delay)
    }

    /// Seconds elapsed since `earlier`, clamped at zero.
    pub fn since(self, earlier: SimTime) -> f64 {
        (self.0 - earlier.0).max(0.0)
    }
}

impl TryFrom<f64> for SimTime {
    type Error = String;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        if value.is_finite() && value >= 0.0 {
            Ok(SimTime(value))
        } else {
            Err(format!("invalid simulation time {value}"))
        }
    }
}

impl From<SimTime> for f64 {
    fn from(t: SimTime) -> f64 {
        t.0
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(usize);

impl EntityId {
    /// Identifier used as the source of events injected from outside the
    /// simulation (initial events, test drivers).
    pub const EXTERNAL: EntityId = EntityId(usize::MAX);

    pub fn new(index: usize) -> Self {
        EntityId(index)
    }

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == EntityId::EXTERNAL {
            f.write_str("external")
        } else {
            write!(f, "#{}", self.0)
        }
    }
}

/// Short kind label of an event payload, used in dispatch traces.
pub trait EventTag {
    fn tag(&self) -> &'static str;
}

#[derive(Clone, Debug)]
pub struct SimEvent<P> {
    pub fire_time: SimTime,
    pub source: EntityId,
    pub destination: EntityId,
    pub payload: P,
    sequence: u64,
}

impl<P> SimEvent<P> {
    pub fn new(fire_time: SimTime, source: EntityId, destination: EntityId, payload: P) -> Self {
        Self {
            fire_time,
            source,
            destination,
            payload,
            sequence: 0,
        }
    }

    /// Insertion counter assigned when the event was scheduled.
    pub fn sequence(&self) -> u64 {
        self.sequence
    }
}

struct Queued<P>(SimEvent<P>);

impl<P> Queued<P> {
    fn key(&self) -> (SimTime, u64) {
        (self.0.fire_time, self.0.sequence)
    }
}

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

pub type EntityError = Box<dyn std::error::Error + Send + Sync>;

/// A simulation participant reacting to delivered events.
pub trait Entity<P>: Any {
    fn name(&self) -> &str;

    fn handle(&mut self, event: SimEvent<P>, ctx: &mut Context<P>) -> Result<(), EntityError>;
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
    #[error("event targets unregistered entity {0}")]
    UnknownDestination(EntityId),
    #[error("simulation has no registered entities")]
    NoEntities,
    #[error("entity '{name}' failed at t={time}: {source}")]
    Entity {
        name: String,
        time: SimTime,
        #[source]
        source: EntityError,
    },
}

/// One dispatched event, as recorded in the optional trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub sequence: u64,
    pub source: EntityId,
    pub destination: EntityId,
    pub tag: &'static str,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}->{} {}",
            self.time, self.sequence, self.source, self.destination, self.tag
        )
    }
}

/// Clock, queue and run-scoped random generator handed to entity handlers.
pub struct Context<P> {
    clock: SimTime,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    next_sequence: u64,
    current: EntityId,
    rng: ChaCha8Rng,
}

impl<P> Context<P> {
    fn new(seed: u64) -> Self {
        Self {
            clock: SimTime::ZERO,
            queue: BinaryHeap::new(),
            next_sequence: 0,
            current: EntityId::EXTERNAL,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    /// Entity whose handler is currently running, or [`EntityId::EXTERNAL`].
    pub fn self_id(&self) -> EntityId {
        self.current
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn schedule(&mut self, mut event: SimEvent<P>) -> Result<(), KernelError> {
        if event.fire_time < self.clock {
            return Err(KernelError::SchedulingInPast {
                at: event.fire_time,
                now: self.clock,
            });
        }
        event.sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Reverse(Queued(event)));
        Ok(())
    }

    /// Schedules `payload` for `destination` after `delay` seconds.
    pub fn send(&mut self, destination: EntityId, delay: f64, payload: P) -> Result<(), KernelError> {
        let at = self.clock.after(delay);
        self.send_at(destination, at, payload)
    }

    pub fn send_at(&mut self, destination: EntityId, at: SimTime, payload: P) -> Result<(), KernelError> {
        let source = self.current;
        self.schedule(SimEvent::new(at, source, destination, payload))
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(q)| q.0.fire_time)
    }
}

pub struct Simulation<P> {
    ctx: Context<P>,
    entities: Vec<Box<dyn Entity<P>>>,
    trace: Option<Vec<TraceRecord>>,
}

impl<P: EventTag + 'static> Simulation<P> {
    pub fn new(seed: u64) -> Self {
        Self {
            ctx: Context::new(seed),
            entities: Vec::new(),
            trace: None,
        }
    }

    /// Records every dispatched event from now on.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Identifier the next call to [`Simulation::add_entity`] will return.
    pub fn next_entity_id(&self) -> EntityId {
        EntityId(self.entities.len())
    }

    pub fn add_entity<E: Entity<P>>(&mut self, entity: E) -> EntityId {
        let id = self.next_entity_id();
        self.entities.push(Box::new(entity));
        id
    }

    pub fn entity<E: Entity<P>>(&self, id: EntityId) -> Option<&E> {
        let entity: &dyn Any = self.entities.get(id.0)?.as_ref();
        entity.downcast_ref::<E>()
    }

    pub fn entity_mut<E: Entity<P>>(&mut self, id: EntityId) -> Option<&mut E> {
        let entity: &mut dyn Any = self.entities.get_mut(id.0)?.as_mut();
        entity.downcast_mut::<E>()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn now(&self) -> SimTime {
        self.ctx.clock
    }

    pub fn context(&mut self) -> &mut Context<P> {
        &mut self.ctx
    }

    pub fn schedule(&mut self, event: SimEvent<P>) -> Result<(), KernelError> {
        self.ctx.schedule(event)
    }

    /// Dispatches events until the queue drains or the next event lies
    /// beyond `until`. Returns the clock, i.e. the fire time of the last
    /// dispatched event.
    pub fn run(&mut self, until: Option<SimTime>) -> Result<SimTime, KernelError> {
        if self.entities.is_empty() {
            return Err(KernelError::NoEntities);
        }
        while let Some(next) = self.ctx.peek_time() {
            if until.is_some_and(|limit| next > limit) {
                break;
            }
            let Reverse(Queued(event)) = self.ctx.queue.pop().expect("peeked event");
            let destination = event.destination;
            let Some(entity) = self.entities.get_mut(destination.0) else {
                return Err(KernelError::UnknownDestination(destination));
            };
            debug_assert!(event.fire_time >= self.ctx.clock);
            self.ctx.clock = event.fire_time;
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceRecord {
                    time: event.fire_time,
                    sequence: event.sequence,
                    source: event.source,
                    destination,
                    tag: event.payload.tag(),
                });
            }
            self.ctx.current = destination;
            let outcome = entity.handle(event, &mut self.ctx);
            self.ctx.current = EntityId::EXTERNAL;
            if let Err(source) = outcome {
                return Err(KernelError::Entity {
                    name: entity.name().to_string(),
                    time: self.ctx.clock,
                    source,
                });
            }
        }
        Ok(self.ctx.clock)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug)]
    enum Ping {
        Mark(&'static str),
        Chain(u32),
    }

    impl EventTag for Ping {
        fn tag(&self) -> &'static str {
            match self {
                Ping::Mark(_) => "MARK",
                Ping::Chain(_) => "CHAIN",
            }
        }
    }

    #[derive(Default)]
    struct Recorder {
        seen: Vec<(f64, String)>,
    }

    impl Entity<Ping> for Recorder {
        fn name(&self) -> &str {
            "recorder"
        }

        fn handle(&mut self, event: SimEvent<Ping>, ctx: &mut Context<Ping>) -> Result<(), EntityError> {
            match event.payload {
                Ping::Mark(label) => self.seen.push((ctx.now().secs(), label.to_string())),
                Ping::Chain(left) => {
                    self.seen.push((ctx.now().secs(), format!("chain{left}")));
                    if left > 0 {
                        ctx.send(ctx.self_id(), 1.0, Ping::Chain(left - 1))?;
                    }
                }
            }
            Ok(())
        }
    }

    fn at(t: f64, dst: EntityId, p: Ping) -> SimEvent<Ping> {
        SimEvent::new(SimTime::from_secs(t), EntityId::EXTERNAL, dst, p)
    }

    #[test]
    fn schedule_orders_by_time_then_sequence() {
        let mut sim = Simulation::new(0);
        let id = sim.add_entity(Recorder::default());
        sim.schedule(at(5.0, id, Ping::Mark("A"))).unwrap();
        sim.schedule(at(5.0, id, Ping::Mark("B"))).unwrap();
        sim.schedule(at(1.0, id, Ping::Mark("first"))).unwrap();
        assert_eq!(sim.context().peek_time(), Some(SimTime::from_secs(1.0)));
        assert_eq!(sim.run(None).unwrap(), SimTime::from_secs(5.0));
        let labels: Vec<_> = sim
            .entity::<Recorder>(id)
            .unwrap()
            .seen
            .iter()
            .map(|s| s.1.clone())
            .collect();
        assert_eq!(labels, ["first", "A", "B"]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut sim = Simulation::new(0);
        let id = sim.add_entity(Recorder::default());
        sim.schedule(at(2.0, id, Ping::Mark("x"))).unwrap();
        sim.run(None).unwrap();
        let err = sim.schedule(at(1.0, id, Ping::Mark("late"))).unwrap_err();
        assert!(matches!(err, KernelError::SchedulingInPast { .. }));
    }

    #[test]
    fn run_examples() {
        let mut sim = Simulation::new(0);
        let id = sim.add_entity(Recorder::default());
        assert_eq!(sim.now(), SimTime::ZERO);
        assert_eq!(sim.run(None).unwrap(), SimTime::ZERO);

        for t in [1.0, 3.0, 7.0] {
            sim.schedule(at(t, id, Ping::Mark("m"))).unwrap();
        }
        assert_eq!(sim.run(None).unwrap().secs(), 7.0);

        let mut sim = Simulation::new(0);
        let id = sim.add_entity(Recorder::default());
        sim.schedule(at(1.0, id, Ping::Chain(1))).unwrap();
        assert_eq!(sim.run(None).unwrap().secs(), 2.0);
        assert_eq!(
            sim.entity::<Recorder>(id).unwrap().seen,
            vec![(1.0, "chain1".into()), (2.0, "chain0".into())]
        );
    }

    #[test]
    fn now_tracks_dispatch() {
        let mut sim = Simulation::new(0);
        let id = sim.add_entity(Recorder::default());
        sim.schedule(at(1.0, id, Ping::Mark("a"))).unwrap();
        sim.schedule(at(3.0, id, Ping::Mark("b"))).unwrap();
        sim.schedule(at(5.0, id, Ping::Mark("inside"))).unwrap();
        sim.run(Some(SimTime::from_secs(3.0))).unwrap();
        assert_eq!(sim.now().secs(), 3.0);
        sim.run(None).unwrap();
        // the handler stamps ctx.now() at dispatch
        assert_eq!(sim.entity::<Recorder>(id).unwrap().seen.last().unwrap().0, 5.0);
    }

    #[test]
    fn unknown_destination_and_no_entities() {
        let mut sim: Simulation<Ping> = Simulation::new(0);
        assert!(matches!(sim.run(None), Err(KernelError::NoEntities)));
        sim.add_entity(Recorder::default());
        sim.schedule(at(1.0, EntityId::new(9), Ping::Mark("lost"))).unwrap();
        assert!(matches!(sim.run(None), Err(KernelError::UnknownDestination(_))));
    }

    #[test]
    fn trace_is_deterministic() {
        let run = || {
            let mut sim = Simulation::new(3);
            sim.enable_trace();
            let a = sim.add_entity(Recorder::default());
            let b = sim.add_entity(Recorder::default());
            sim.schedule(at(1.0, a, Ping::Chain(3))).unwrap();
            sim.schedule(at(1.0, b, Ping::Chain(2))).unwrap();
            sim.schedule(at(2.0, a, Ping::Mark("x"))).unwrap();
            sim.run(None).unwrap();
            sim.trace()
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(run(), run());
    }

    proptest::proptest! {
        #[test]
        fn dispatch_is_monotone_and_complete(times in proptest::collection::vec(0.0f64..100.0, 1..40)) {
            let mut sim = Simulation::new(0);
            sim.enable_trace();
            let id = sim.add_entity(Recorder::default());
            for &t in &times {
                sim.schedule(at(t, id, Ping::Mark("p"))).unwrap();
            }
            sim.run(None).unwrap();
            let trace = sim.trace();
            proptest::prop_assert_eq!(trace.len(), times.len());
            for pair in trace.windows(2) {
                proptest::prop_assert!((pair[0].time, pair[0].sequence) < (pair[1].time, pair[1].sequence));
            }
        }
    }
}
