//! Event-time bookkeeping: action holding between events, error signals,
//! and inter-event statistics.
//!
//! Each agent keeps its own sequence of event steps. At an event the agent
//! records the step, snapshots its physical state, and adopts a freshly
//! sampled action; between events the last action is held and the error
//! signal measures how far the state has drifted from the snapshot.
//! Step 0 of every episode is a forced event — the held action is
//! otherwise undefined.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
struct AgentSlot {
    events: Vec<usize>,
    snapshot: Vec<f64>,
    held_action: usize,
}

/// Per-episode event schedules for every agent of one environment instance.
#[derive(Debug, Clone)]
pub struct EventSchedule {
    agents: Vec<AgentSlot>,
}

impl EventSchedule {
    pub fn new(agent_count: usize) -> Self {
        EventSchedule { agents: vec![AgentSlot::default(); agent_count] }
    }

    /// Clear all event history; call at every episode boundary. Error
    /// signals compare states within one trajectory only.
    pub fn reset(&mut self) {
        for slot in &mut self.agents {
            slot.events.clear();
            slot.snapshot.clear();
            slot.held_action = 0;
        }
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    /// Whether `agent` has recorded at least one event this episode.
    pub fn has_event(&self, agent: usize) -> bool {
        !self.agents[agent].events.is_empty()
    }

    /// The action currently held for `agent` (undefined before the first
    /// event; forced step-0 events guarantee it is set from step 0 on).
    pub fn held_action(&self, agent: usize) -> usize {
        self.agents[agent].held_action
    }

    pub fn events(&self, agent: usize) -> &[usize] {
        &self.agents[agent].events
    }

    /// Resolve the effective action for `agent` at `step`.
    ///
    /// Triggers when `trigger != 0` or at the forced step-0 event; an event
    /// records the step, snapshots `current_state`, and adopts
    /// `fresh_action`. Otherwise the held action is returned unchanged.
    pub fn apply_trigger(
        &mut self,
        agent: usize,
        step: usize,
        trigger: u8,
        fresh_action: usize,
        current_state: &[f64],
    ) -> Result<usize> {
        let slot = &mut self.agents[agent];
        if let Some(&last) = slot.events.last() {
            if step <= last {
                return Err(Error::Contract(format!(
                    "apply_trigger out of order: step {step} after event at {last} for agent {agent}"
                )));
            }
        }
        let fires = trigger != 0 || step == 0;
        if fires {
            slot.events.push(step);
            slot.snapshot = current_state.to_vec();
            slot.held_action = fresh_action;
        }
        Ok(slot.held_action)
    }

    /// Deviation of the current state from the snapshot at the last event.
    pub fn error_signal(&self, agent: usize, current_state: &[f64]) -> Result<Vec<f64>> {
        let slot = &self.agents[agent];
        if slot.events.is_empty() {
            return Err(Error::Contract(format!(
                "error_signal requested before any event for agent {agent}"
            )));
        }
        assert_eq!(slot.snapshot.len(), current_state.len(), "state dimension changed mid-episode");
        Ok(current_state
            .iter()
            .zip(&slot.snapshot)
            .map(|(c, s)| c - s)
            .collect())
    }

    /// Successive differences of the event list; empty with fewer than 2 events.
    pub fn inter_event_times(&self, agent: usize) -> Vec<usize> {
        self.agents[agent]
            .events
            .windows(2)
            .map(|w| w[1] - w[0])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_zero_always_triggers() {
        let mut sched = EventSchedule::new(1);
        let action = sched.apply_trigger(0, 0, 0, 3, &[1.0]).unwrap();
        assert_eq!(action, 3);
        assert_eq!(sched.events(0), &[0]);
    }

    #[test]
    fn hold_semantics_between_events() {
        let mut sched = EventSchedule::new(1);
        sched.apply_trigger(0, 0, 1, 2, &[0.0]).unwrap();
        for step in 1..=4 {
            let action = sched.apply_trigger(0, step, 0, 9, &[step as f64]).unwrap();
            assert_eq!(action, 2, "held action must persist");
        }
        assert_eq!(sched.events(0), &[0]);
    }

    #[test]
    fn trigger_pattern_replay() {
        // Pattern [1,0,0,1,0,1] over steps 0..5 -> events [0,3,5], gaps [3,2].
        let pattern = [1u8, 0, 0, 1, 0, 1];
        let mut sched = EventSchedule::new(1);
        for (step, &bit) in pattern.iter().enumerate() {
            sched.apply_trigger(0, step, bit, step, &[0.0]).unwrap();
        }
        assert_eq!(sched.events(0), &[0, 3, 5]);
        assert_eq!(sched.inter_event_times(0), &[3, 2]);
    }

    #[test]
    fn error_signal_semantics() {
        let mut sched = EventSchedule::new(1);
        assert!(sched.error_signal(0, &[0.0]).is_err(), "no event yet");

        sched.apply_trigger(0, 0, 1, 0, &[1.0, -2.0]).unwrap();
        assert_eq!(sched.error_signal(0, &[1.0, -2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(sched.error_signal(0, &[1.5, -2.5]).unwrap(), vec![0.5, -0.5]);
    }

    #[test]
    fn error_signal_accumulates_displacement() {
        // Ten drifting steps without triggering: e equals the cumulative sum
        // of the per-step displacements since the event.
        let deltas = [0.3, -0.1, 0.7, 0.2, -0.5, 0.05, 0.0, -0.25, 0.4, 0.1];
        let mut sched = EventSchedule::new(1);
        let mut x = 2.0;
        sched.apply_trigger(0, 0, 1, 0, &[x]).unwrap();
        let mut cumulative = 0.0;
        for (step, &d) in deltas.iter().enumerate() {
            x += d;
            cumulative += d;
            sched.apply_trigger(0, step + 1, 0, 0, &[x]).unwrap();
            let e = sched.error_signal(0, &[x]).unwrap();
            assert!((e[0] - cumulative).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_order_step_rejected() {
        let mut sched = EventSchedule::new(1);
        sched.apply_trigger(0, 0, 1, 0, &[0.0]).unwrap();
        sched.apply_trigger(0, 3, 1, 1, &[0.0]).unwrap();
        assert!(sched.apply_trigger(0, 3, 1, 2, &[0.0]).is_err());
        assert!(sched.apply_trigger(0, 2, 1, 2, &[0.0]).is_err());
    }

    #[test]
    fn long_random_pattern_matches_scan_oracle() {
        // Deterministic LCG pattern, 1000 steps; compare against an
        // independent scan that tracks the previous event index directly.
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut bits = Vec::with_capacity(1000);
        for _ in 0..1000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            bits.push(((state >> 33) & 1) as u8);
        }
        let mut sched = EventSchedule::new(1);
        for (step, &bit) in bits.iter().enumerate() {
            sched.apply_trigger(0, step, bit, 0, &[0.0]).unwrap();
        }
        // Scan oracle.
        let mut gaps = Vec::new();
        let mut last: Option<usize> = None;
        for (step, &bit) in bits.iter().enumerate() {
            if bit == 1 || step == 0 {
                if let Some(prev) = last {
                    gaps.push(step - prev);
                }
                last = Some(step);
            }
        }
        assert_eq!(sched.inter_event_times(0), gaps);
        assert!(sched.inter_event_times(0).iter().all(|&g| g >= 1), "gaps are >= 1 by construction");
    }

    #[test]
    fn all_ones_degenerates_to_time_triggered() {
        let mut sched = EventSchedule::new(1);
        for step in 0..50 {
            let a = sched.apply_trigger(0, step, 1, step, &[0.0]).unwrap();
            assert_eq!(a, step, "fresh action adopted every step");
        }
        assert_eq!(sched.events(0).len(), 50);
        assert!(sched.inter_event_times(0).iter().all(|&g| g == 1));
    }

    #[test]
    fn all_zeros_holds_forever() {
        let mut sched = EventSchedule::new(1);
        sched.apply_trigger(0, 0, 0, 7, &[0.0]).unwrap();
        for step in 1..200 {
            assert_eq!(sched.apply_trigger(0, step, 0, 1, &[0.0]).unwrap(), 7);
        }
        assert_eq!(sched.events(0), &[0]);
        assert!(sched.inter_event_times(0).is_empty());
    }
}
