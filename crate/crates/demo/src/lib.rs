//! Browser demo: drives a small evacuation run entirely in the page via
//! wasm-bindgen. Three interactive operations are exposed — start a fresh
//! run, advance it one round, and inspect the textual context any live agent
//! would be deciding from. All geometry and round data cross the JS boundary
//! as JSON strings so the page needs no generated type glue.
//!
//! The crate also builds for native targets (that is what `cargo test`
//! exercises); the wasm-specific parts are attribute-only.

use wasm_bindgen::prelude::*;

use evacsim::agents::{AgentId, AgentState};
use evacsim::agents::Destination;
use evacsim::context::render_context_text;
use evacsim::coordination::default_coordinator_layout;
use evacsim::decisions::{DecisionPolicy, DelayK, NearestExit, ObedientToCoordinator};
use evacsim::engine::{DecisionBackend, Simulation, SimulationConfig};
use evacsim::population::{generate_population, PopulationSpec, StubPersonaBackend};
use evacsim::stadium::StadiumModel;

const DEMO_ANNOUNCEMENT: &str =
    "Attention: severe weather is approaching the stadium. Please proceed calmly to the nearest exit and follow staff guidance.";

/// Upper bound so a forgotten play loop cannot spin forever.
const DEMO_MAX_ROUNDS: u64 = 5_000;

#[wasm_bindgen]
pub struct DemoState {
    sim: Simulation,
    layout: String,
}

/// Fallible core kept separate from the wasm wrappers so native unit tests
/// can exercise it without touching `JsError`.
fn build_state(
    target_students: u32,
    seed: u64,
    policy: &str,
    coordinators: bool,
) -> Result<DemoState, String> {
    if target_students == 0 {
        return Err("target_students must be at least 1".to_string());
    }
    let policy = parse_policy(policy)?;
    let model = StadiumModel::default_layout();
    let mut spec = PopulationSpec::default_spec().scaled_students(target_students);
    spec.seed = seed;
    let population =
        generate_population(&spec, &model, &mut StubPersonaBackend).map_err(|e| e.to_string())?;
    let coordinators = if coordinators {
        default_coordinator_layout(&model).map_err(|e| e.to_string())?
    } else {
        Vec::new()
    };
    let layout = layout_json(&model, &coordinators);
    let config = SimulationConfig {
        master_seed: seed,
        max_rounds: DEMO_MAX_ROUNDS,
        announcement: Some(DEMO_ANNOUNCEMENT.to_string()),
        ..SimulationConfig::default()
    };
    let sim = Simulation::new(
        model.clone(),
        population,
        coordinators,
        Destination::enumerate(&model),
        DecisionBackend::Policy(policy),
        config,
    )
    .map_err(|e| e.to_string())?;
    Ok(DemoState { sim, layout })
}

fn parse_policy(text: &str) -> Result<Box<dyn DecisionPolicy>, String> {
    if text == "nearest-exit" {
        return Ok(Box::new(NearestExit));
    }
    if text == "obedient" {
        return Ok(Box::new(ObedientToCoordinator));
    }
    if let Some(k) = text.strip_prefix("delay:") {
        let k = k.parse::<u64>().map_err(|_| format!("invalid delay count in '{text}'"))?;
        return Ok(Box::new(DelayK { k }));
    }
    Err(format!("unknown policy '{text}'; expected nearest-exit, obedient, or delay:<k>"))
}

fn layout_json(model: &StadiumModel, coordinators: &[evacsim::coordination::Coordinator]) -> String {
    let features: Vec<serde_json::Value> = model
        .features
        .iter()
        .map(|f| {
            serde_json::json!({
                "id": f.id,
                "kind": f.kind,
                "rect": [f.rect.x, f.rect.y, f.rect.w, f.rect.h],
                "impassable": f.impassable,
            })
        })
        .collect();
    let exits: Vec<serde_json::Value> = model
        .exits
        .iter()
        .map(|e| serde_json::json!({ "id": e.id.0, "x": e.position.x, "y": e.position.y }))
        .collect();
    let coordinators: Vec<serde_json::Value> = coordinators
        .iter()
        .map(|c| {
            serde_json::json!({
                "x": c.position.x,
                "y": c.position.y,
                "exit": c.suggested_exit.0,
                "radius": c.influence_radius,
            })
        })
        .collect();
    serde_json::json!({
        "width": model.width,
        "height": model.height,
        "features": features,
        "exits": exits,
        "coordinators": coordinators,
    })
    .to_string()
}

fn state_code(state: AgentState) -> u8 {
    match state {
        AgentState::Discussing => 0,
        AgentState::Moving => 1,
        AgentState::Waiting => 2,
        AgentState::Exited => 3,
    }
}

impl DemoState {
    fn frame(&self) -> String {
        let agents: Vec<serde_json::Value> = self
            .sim
            .agents()
            .iter()
            .filter(|a| a.state != AgentState::Exited)
            .map(|a| {
                serde_json::json!([
                    a.id.0,
                    (a.position.x * 10.0).round() / 10.0,
                    (a.position.y * 10.0).round() / 10.0,
                    state_code(a.state),
                    u8::from(a.accessibility),
                ])
            })
            .collect();
        serde_json::json!({
            "round": self.sim.round(),
            "exited": self.sim.exited_total(),
            "total": self.sim.total_agents(),
            "finished": self.sim.is_finished(),
            "agents": agents,
        })
        .to_string()
    }

    fn advance(&mut self) -> Result<String, String> {
        if !self.sim.is_finished() {
            self.sim.step_round().map_err(|e| e.to_string())?;
        }
        Ok(self.frame())
    }

    fn context_text(&self, agent: u32) -> Result<String, String> {
        let context = self.sim.agent_context(AgentId(agent)).map_err(|e| e.to_string())?;
        Ok(render_context_text(&context))
    }
}

#[wasm_bindgen]
impl DemoState {
    /// Start a fresh run. `policy` is `nearest-exit`, `obedient`, or
    /// `delay:<k>`; `coordinators` toggles the default staff layout.
    #[wasm_bindgen(constructor)]
    pub fn new(
        target_students: u32,
        seed: u32,
        policy: &str,
        coordinators: bool,
    ) -> Result<DemoState, JsError> {
        build_state(target_students, u64::from(seed), policy, coordinators)
            .map_err(|e| JsError::new(&e))
    }

    /// Static geometry for the canvas: features, exits, coordinators.
    pub fn layout(&self) -> String {
        self.layout.clone()
    }

    /// Current positions without advancing the clock.
    pub fn current_frame(&self) -> String {
        self.frame()
    }

    /// Advance one round and return the new frame. A finished run returns
    /// its final frame unchanged.
    pub fn step(&mut self) -> Result<String, JsError> {
        self.advance().map_err(|e| JsError::new(&e))
    }

    /// The decision context text for a live agent, exactly as a decision
    /// backend would receive it.
    pub fn inspect(&self, agent: u32) -> Result<String, JsError> {
        self.context_text(agent).map_err(|e| JsError::new(&e))
    }

    pub fn round(&self) -> u32 {
        self.sim.round() as u32
    }

    pub fn is_finished(&self) -> bool {
        self.sim.is_finished()
    }
}
