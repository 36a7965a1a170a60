use std::time::Duration;

use paretohil_client::{Client, ClientError};
use paretohil_core::api::{CharacterizeRequest, CreateSession, PlayerKind};
use paretohil_core::gp::{OrdinalLabel, Preference};
use paretohil_core::moo::{run_characterization, CharacterizationConfig};
use paretohil_core::protocol::{load, replay, run_simulated, Group, SessionConfig};
use paretohil_core::record::Phase;
use paretohil_core::wire::{ClientMsg, ServerMsg};
use paretohil_service::{spawn, Pacing, ServiceConfig};

async fn start(cfg: ServiceConfig) -> Client {
    let (addr, _) = spawn("127.0.0.1:0".parse().unwrap(), cfg).await.unwrap();
    Client::new(format!("http://{addr}"))
}

fn small_config(group: Group, seed: u64) -> SessionConfig {
    SessionConfig {
        group,
        master_seed: seed,
        training_trials: 2,
        eval_trials: 1,
        characterization: CharacterizationConfig { iterations: 4, grid_size: 21, ..Default::default() },
        ..Default::default()
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn simulated_session_matches_local_run() {
    let dir = tempfile::tempdir().unwrap();
    let client = start(ServiceConfig { log_dir: Some(dir.path().to_path_buf()), ..Default::default() }).await;
    client.health().await.unwrap();
    let cfg = SessionConfig { master_seed: 42, ..Default::default() };
    let st = client.create_session(&CreateSession { config: cfg.clone(), player: PlayerKind::Simulated }).await.unwrap();
    assert_eq!(st.next_phase, Some(Phase::Warmup));
    assert!(!st.finished);

    let mut phases = Vec::new();
    let log = client.run_to_end(&st.id, |r| phases.push(r.phase)).await.unwrap();
    assert_eq!(phases, Phase::ORDER);
    assert!(log.is_complete());
    assert!(replay(&log).unwrap().is_identical());

    let local = run_simulated(cfg).unwrap();
    assert_eq!(local.records.len(), log.records.len());
    assert!(local.records.iter().zip(&log.records).all(|(a, b)| a.replay_eq(b)));

    let on_disk = load(dir.path().join(format!("{}.jsonl", st.id))).unwrap();
    assert_eq!(on_disk, log);

    let models = client.models(&st.id).await.unwrap();
    assert_eq!(models.pre.as_ref().unwrap().grid.len(), 201);
    assert!(models.post.is_some() && models.pre_front.is_some() && models.post_front.is_some());

    let st = client.session(&st.id).await.unwrap();
    assert!(st.finished && st.failure.is_none());
    assert_eq!(st.records, 46);
    assert_eq!(client.sessions().await.unwrap().len(), 1);
    match client.advance(&st.id, true).await {
        Err(ClientError::Api { status: 409, .. }) => {}
        other => panic!("expected conflict, got {other:?}"),
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn characterization_endpoint_matches_core() {
    let client = start(ServiceConfig::default()).await;
    let req = CharacterizeRequest { seed: 9, ..Default::default() };
    let resp = client.characterize(&req).await.unwrap();
    assert_eq!(resp.records.len(), 10);
    assert_eq!(resp.snapshots.len(), 10);
    let mut user = paretohil_core::simuser::SimUser::new(req.profile.clone(), Default::default()).unwrap();
    let local = run_characterization(&mut user, &req.config, Phase::PreHil, 9).unwrap();
    assert_eq!(local.front, resp.front);
    assert!(local.records.iter().zip(&resp.records).all(|(a, b)| a.replay_eq(b)));
}

#[tokio::test(flavor = "multi_thread")]
async fn errors_are_structured() {
    let client = start(ServiceConfig::default()).await;
    match client.session("nope").await {
        Err(ClientError::Api { status: 404, body }) => assert_eq!(body.kind, "not_found"),
        other => panic!("{other:?}"),
    }
    let bad = SessionConfig { training_trials: 0, ..Default::default() };
    match client.create_session(&CreateSession { config: bad, player: PlayerKind::Simulated }).await {
        Err(ClientError::Api { status: 400, body }) => assert_eq!(body.kind, "config"),
        other => panic!("{other:?}"),
    }
    let req = CharacterizeRequest {
        config: CharacterizationConfig { sobol_iterations: 0, ..Default::default() },
        ..Default::default()
    };
    assert!(matches!(client.characterize(&req).await, Err(ClientError::Api { status: 400, .. })));
}

#[derive(Default, Debug)]
struct Seen {
    states: usize,
    trial_ends: usize,
    ordinal: usize,
    pairwise: usize,
    model_updates: usize,
    phase_updates: Vec<(Phase, usize)>,
    errors: Vec<String>,
    /// Query kinds in order, 'o' or 'p'.
    queries: String,
}

#[tokio::test(flavor = "multi_thread")]
async fn human_session_over_websocket() {
    let pacing = Pacing { time_scale: 0.0, answer_timeout: Duration::from_secs(20) };
    let client = start(ServiceConfig { pacing, ..Default::default() }).await;
    let st = client
        .create_session(&CreateSession { config: small_config(Group::Staircase, 3), player: PlayerKind::Human })
        .await
        .unwrap();
    let mut socket = client.connect(&st.id).await.unwrap();
    assert!(client.connect(&st.id).await.is_err(), "second participant socket must be refused");

    let player = tokio::spawn(async move {
        let mut seen = Seen::default();
        while let Some(msg) = socket.recv().await {
            match msg.unwrap() {
                ServerMsg::State { .. } => seen.states += 1,
                ServerMsg::TrialStart { .. } => socket.send(&ClientMsg::Input { force: 1e6 }).await.unwrap(),
                ServerMsg::TrialEnd { .. } => seen.trial_ends += 1,
                ServerMsg::QueryOrdinal {} => {
                    seen.ordinal += 1;
                    seen.queries.push('o');
                    socket.send(&ClientMsg::AnswerOrdinal { label: OrdinalLabel::Moderate }).await.unwrap();
                }
                ServerMsg::QueryPairwise { prev_assist_blinded } => {
                    assert!(!prev_assist_blinded);
                    seen.pairwise += 1;
                    seen.queries.push('p');
                    socket.send(&ClientMsg::AnswerPairwise { choice: Preference::CurrentHarder }).await.unwrap();
                }
                ServerMsg::ModelUpdate(_) => seen.model_updates += 1,
                ServerMsg::PhaseUpdate { phase, iteration, .. } => seen.phase_updates.push((phase, iteration)),
                ServerMsg::Error { message } => seen.errors.push(message),
            }
            if seen.phase_updates.last() == Some(&(Phase::PostHil, 4)) && seen.model_updates == 8 {
                break;
            }
        }
        seen
    });

    let log = tokio::time::timeout(Duration::from_secs(60), client.run_to_end(&st.id, |_| {})).await.unwrap().unwrap();
    let seen = tokio::time::timeout(Duration::from_secs(10), player).await.unwrap().unwrap();

    assert!(log.is_complete(), "{:?}", log.failure);
    assert_eq!(log.records_in(Phase::PreHil).count(), 4);
    assert_eq!(log.records_in(Phase::Training).count(), 2);
    assert_eq!(log.records_in(Phase::PreEval).count(), 1);
    assert_eq!(seen.ordinal, 8);
    assert_eq!(seen.pairwise, 6);
    assert_eq!(seen.queries, "oopopopoopopop");
    assert_eq!(seen.model_updates, 8);
    // warm-up attempt plus three attempts for every recorded trial
    assert_eq!(seen.trial_ends, 1 + 3 * log.records.len());
    assert!(seen.states > seen.trial_ends);
    assert!(seen.errors.is_empty(), "{:?}", seen.errors);
    assert!(log.records.iter().all(|r| r.ordinal.is_some() == r.phase.is_hil()));
    assert!(log.records_in(Phase::PreHil).all(|r| r.pairwise == (r.iteration > 1).then_some(Preference::CurrentHarder)));
}

#[tokio::test(flavor = "multi_thread")]
async fn unanswered_query_fails_the_phase_with_partial_log() {
    let pacing = Pacing { time_scale: 0.0, answer_timeout: Duration::from_millis(200) };
    let client = start(ServiceConfig { pacing, ..Default::default() }).await;
    let st = client
        .create_session(&CreateSession { config: small_config(Group::Pareto, 4), player: PlayerKind::Human })
        .await
        .unwrap();
    for _ in 0..2 {
        client.advance(&st.id, true).await.unwrap();
    }
    match client.advance(&st.id, true).await {
        Err(ClientError::Api { status: 502, body }) => assert!(body.error.contains("no answer")),
        other => panic!("{other:?}"),
    }
    let st = client.session(&st.id).await.unwrap();
    assert!(st.finished);
    assert_eq!(st.failure.unwrap().phase, Phase::PreHil);
    let log = client.log(&st.id).await.unwrap();
    assert_eq!(log.records_in(Phase::PreEval).count(), 1);
    assert!(log.failure.is_some());
}

#[tokio::test(flavor = "multi_thread")]
async fn background_advance_reports_progress() {
    let client = start(ServiceConfig::default()).await;
    let st = client.create_session(&CreateSession { config: small_config(Group::Pareto, 5), player: PlayerKind::Simulated }).await.unwrap();
    let r = client.advance(&st.id, false).await.unwrap();
    assert_eq!(r.phase, Phase::Warmup);
    assert!(!r.done);
    // queued behind the first command
    let r2 = client.advance(&st.id, true).await.unwrap();
    assert_eq!(r2.phase, Phase::PreEval);
    assert_eq!(r2.status.completed_phases, vec![Phase::Warmup, Phase::PreEval]);
}
