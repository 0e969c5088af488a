"""
Interface en ligne de commande
Sous-commandes : validate, threads, plan, simulate, eval, export-dot, figure, generate.
Codes de sortie : 0 ok, 1 graphe invalide, 2 erreur d'entrée/sortie ou de schéma,
3 violation d'invariant interne.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import config_simulation
from filter.data_loading import (
    graph_paths, load_graph, load_graphs, load_logs, load_predictions,
    load_trajectories, rollout_logs_from_records
)
from filter.export import (
    breakdown_table, export_dot, records_to_jsonl, report_table,
    serialize_graph_document, write_records, write_text
)
from filter.synthetic import generate_corpus
from functions.errors import (
    IngestionError, InvariantViolation, TaskGraphError, UnvalidatedGraphError
)
from functions.figures import write_figures
from functions.graph_core import resolve_labels, state_from_executed, validate_graph
from functions.metrics import build_report
from functions.planner import (
    ExecutionHistory, PredictedSequence, mixing_entropy, select_action_entropy, select_action_greedy
)
from functions.simulator import RolloutJob, replay_log, run_jobs
from functions.threads import build_thread_map

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INPUT = 2
EXIT_INVARIANT = 3


def _exit_code(exc):
    if isinstance(exc, UnvalidatedGraphError):
        return EXIT_VALIDATION
    if isinstance(exc, InvariantViolation):
        return EXIT_INVARIANT
    return EXIT_INPUT


def _emit(args, record=None, text=None):
    """Sortie machine (une ligne JSON) ou texte lisible selon --format"""
    if args.format == "records":
        if record is not None:
            print(json.dumps(record, ensure_ascii=False))
    elif text is not None:
        print(text)


def _graph_for(graphs, log):
    try:
        return graphs[log.task]
    except KeyError:
        raise IngestionError(f"Tâche {log.task!r} absente de --graphs", [(log.video_id, log.task)]) from None


def _resolve_or_fail(graph, labels, what):
    ids, unresolved = resolve_labels(graph, labels or [])
    if unresolved:
        raise IngestionError(f"{what}: libellés non résolus", [(what, label) for label in unresolved])
    return ids


# ============================================================================
# SOUS-COMMANDES
# ============================================================================

def cmd_validate(args):
    worst = EXIT_OK
    for path in graph_paths(args.graphs):
        try:
            graph = load_graph(path, validate=False)
        except TaskGraphError as e:
            _emit(args, {"type": "validation", "graph": str(path), **e.to_record()},
                  f"❌ {path}: {e.message}\n" + "\n".join(f"   - {loc}: {det}" for loc, det in e.loci))
            worst = max(worst, _exit_code(e))
            continue

        report = validate_graph(graph)
        record = {"type": "validation", "graph": str(path), "task": graph.task,
                  "valid": not report, "violations": report.to_records()}
        if report:
            lines = "\n".join(f"   - [{v.rule}] {v.locus()}: {v.message}" for v in report)
            _emit(args, record, f"❌ {path} ({graph.task}): {len(report)} violation(s)\n{lines}")
            worst = max(worst, EXIT_VALIDATION)
        else:
            _emit(args, record, f"✅ {path} ({graph.task}): graphe valide")
    return worst


def cmd_threads(args):
    graph = load_graph(args.graph)
    thread_map = build_thread_map(graph)
    if args.format == "records":
        for record in thread_map.to_records():
            _emit(args, {"type": "thread", "task": graph.task, **record})
        return EXIT_OK

    print(f"🧵 Fils de {graph.task}")
    for v, k in thread_map.assignment.items():
        node = graph.nodes[v]
        print(f"   {v:<16} {k:>3}   {node.kind.value:<10} {node.label}")
    return EXIT_OK


def cmd_plan(args):
    graph = load_graph(args.graph)
    thread_map = build_thread_map(graph)
    human = _resolve_or_fail(graph, args.human, "--human")
    robot = _resolve_or_fail(graph, args.robot, "--robot")
    executed = _resolve_or_fail(graph, args.executed, "--executed")

    state = state_from_executed(graph, set(executed) | set(human) | set(robot))
    history = ExecutionHistory(human, robot)
    predicted = PredictedSequence.from_labels(graph, args.predicted or [])
    if args.policy == "greedy":
        decision = select_action_greedy(graph, state, history, predicted, thread_map)
    else:
        decision = select_action_entropy(graph, state, history, predicted, thread_map)

    scores = [mixing_entropy(history, a, thread_map) for a in decision.candidates]
    record = {
        "type": "decision", "action": decision.kind.value, "node": decision.node,
        "reason": decision.reason.value, "candidates": list(decision.candidates),
        "unresolved": list(predicted.unresolved),
        "breakdown": decision.breakdown.to_record() if decision.breakdown else None,
        "scores": [{"candidate": s.candidate, "h_mix": s.h_mix} for s in scores],
    }
    if args.format == "records":
        _emit(args, record)
        return EXIT_OK

    print(f"🤖 Décision: {decision}")
    for s in scores:
        print(f"   H_mix({s.candidate}) = {s.h_mix:.6f}")
    if predicted.unresolved:
        print(f"⚠️  Hors vocabulaire: {list(predicted.unresolved)}")
    if decision.breakdown is not None:
        print(breakdown_table(decision.breakdown).to_string())
    return EXIT_OK


def _simulation_jobs(args):
    if args.mode == "online" and args.oracle:
        raise IngestionError("Le mode online évalue des prédictions de fichier, incompatible avec --oracle",
                             [("--oracle", "mode online")])
    graphs = load_graphs(args.graphs)
    trajectories = load_trajectories(args.trajectories, graphs)
    predictions = {}
    if args.predictions and not args.oracle:
        predictions = load_predictions(args.predictions)
    elif args.mode == "online":
        raise IngestionError("Le mode online exige --predictions", [("--predictions", "absent")])

    thread_maps = {task: build_thread_map(graph) for task, graph in graphs.items()}
    safeguard = config_simulation.get_safeguard() and not args.no_safeguard
    stall_rounds = args.stall_rounds or config_simulation.get_stall_rounds()
    jobs = []
    for trajectory in trajectories:
        file_predictions = None
        if args.mode == "online" or (args.predictions and not args.oracle):
            file_predictions = predictions.get(trajectory.video_id, {})
        jobs.append(RolloutJob(
            graph=graphs[trajectory.task], thread_map=thread_maps[trajectory.task],
            trajectory=trajectory, policy=args.policy, predictions=file_predictions,
            safeguard=safeguard, stall_rounds=stall_rounds, mode=args.mode,
        ))
    return graphs, jobs


def cmd_simulate(args):
    graphs, jobs = _simulation_jobs(args)
    workers = args.jobs or config_simulation.get_jobs()
    results = run_jobs(jobs, workers)

    if args.mode == "full":
        for log in results:
            replay_log(_graph_for(graphs, log), log)
        report = build_report(logs=results)
    else:
        report = build_report(samples=results)

    out_dir = Path(args.out or config_simulation.get_output_dir())
    records = [r for result in results for r in result.to_records()]
    write_records(out_dir / "logs.jsonl", records)
    write_text(out_dir / "report.json", json.dumps(report.to_record(), indent=2, ensure_ascii=False) + "\n")

    stalled = report.n.get("stalled", 0)
    if args.format == "records":
        _emit(args, report.to_record())
    else:
        print(f"✅ {len(results)} vidéo(s) simulée(s) [{args.mode}, {args.policy}] -> {out_dir}")
        if stalled:
            print(f"⚠️  {stalled} rollout(s) bloqué(s)")
        print(report_table(report).to_string())
    return EXIT_OK


def cmd_eval(args):
    records = load_logs(args.logs)
    if args.graphs:
        graphs = load_graphs(args.graphs)
        for log in rollout_logs_from_records(records):
            replay_log(_graph_for(graphs, log), log)

    if any(r["type"] == "rollout" for r in records):
        report = build_report(logs=records)
    else:
        report = build_report(samples=records)

    if args.format == "records":
        _emit(args, report.to_record())
    else:
        print(f"📊 Rapport recalculé depuis {args.logs}")
        print(report_table(report).to_string())
    return EXIT_OK


def cmd_export_dot(args):
    graph = load_graph(args.graph)
    source = export_dot(graph, build_thread_map(graph))
    if args.out:
        write_text(args.out, source)
        print(f"✅ DOT écrit dans {args.out}")
    else:
        sys.stdout.write(source)
    return EXIT_OK


def cmd_figure(args):
    runs = {Path(path).stem: load_logs(path) for path in args.logs}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    has_rollouts = all(any(r["type"] == "rollout" for r in records) for records in runs.values())
    write_figures(runs, out, include_saved_steps=has_rollouts)
    print(f"✅ Figure écrite dans {out}")
    return EXIT_OK


def cmd_generate(args):
    out_dir = Path(args.out)
    graphs, records = generate_corpus(
        args.seed, n_graphs=args.graphs, videos_per_graph=args.videos, perturb=args.perturb,
        overlap_prob=args.overlap, nested_prob=args.nested,
    )
    for graph in graphs:
        write_text(out_dir / "graphs" / f"{graph.task}.json", serialize_graph_document(graph))
    write_records(out_dir / "trajectories.jsonl", records)
    if args.format == "records":
        sys.stdout.write(records_to_jsonl(records))
    else:
        print(f"✅ {len(graphs)} graphe(s), {len(records)} trajectoire(s) -> {out_dir} (seed={args.seed})")
    return EXIT_OK


# ============================================================================
# PARSEUR
# ============================================================================

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["table", "records"], default="table", help="sortie lisible ou JSON Lines")
    common.add_argument("--jobs", type=int, default=None, help="processus pour les commandes par lot")
    common.add_argument("--seed", type=int, default=0, help="graine de la génération synthétique")
    common.add_argument("--log-level", default=None, help="niveau de journalisation (WARNING par défaut)")

    parser = argparse.ArgumentParser(prog="taskgraph", description="Graphes de tâche ET/OU et planification proactive")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="valider des graphes")
    p.add_argument("graphs", nargs="+")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("threads", parents=[common], help="afficher l'application des fils")
    p.add_argument("graph")
    p.set_defaults(func=cmd_threads)

    p = sub.add_parser("plan", parents=[common], help="une décision robot")
    p.add_argument("graph")
    p.add_argument("--executed", nargs="*", default=[])
    p.add_argument("--human", nargs="*", default=[])
    p.add_argument("--robot", nargs="*", default=[])
    p.add_argument("--predicted", nargs="*", default=[])
    p.add_argument("--policy", choices=["entropy", "greedy"], default="entropy")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", parents=[common], help="simuler un corpus de vidéos")
    p.add_argument("--graphs", nargs="+", required=True)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--predictions", default=None)
    p.add_argument("--policy", choices=["entropy", "greedy", "none"], default="entropy")
    p.add_argument("--oracle", action="store_true", help="prédictions = reste de l'annotation")
    p.add_argument("--no-safeguard", action="store_true")
    p.add_argument("--mode", choices=["full", "online"], default="full")
    p.add_argument("--stall-rounds", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", parents=[common], help="recalculer un rapport depuis des journaux")
    p.add_argument("--logs", required=True)
    p.add_argument("--graphs", nargs="*", default=None, help="contrôle de rejeu des journaux")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-dot", parents=[common], help="exporter un graphe en DOT")
    p.add_argument("graph")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export_dot)

    p = sub.add_parser("figure", parents=[common], help="figure HTML de la décomposition des décisions")
    p.add_argument("--logs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("generate", parents=[common], help="corpus synthétique")
    p.add_argument("--out", required=True)
    p.add_argument("--graphs", type=int, default=3)
    p.add_argument("--videos", type=int, default=2)
    p.add_argument("--perturb", action="store_true", help="omettre un prérequis par trajectoire")
    p.add_argument("--overlap", type=float, default=0.0)
    p.add_argument("--nested", type=float, default=0.0)
    p.set_defaults(func=cmd_generate)

    return parser


def run_command(argv=None):
    """
    Point d'entrée programmatique de la CLI

    Returns:
        int: code de sortie
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level:
        config_simulation.configure_logging(args.log_level.upper())

    try:
        return args.func(args)
    except TaskGraphError as e:
        if args.format == "records":
            print(json.dumps(e.to_record(), ensure_ascii=False))
        else:
            print(f"❌ {e.message}", file=sys.stderr)
            for locus, detail in e.loci:
                print(f"   - {locus}: {detail}", file=sys.stderr)
        return _exit_code(e)
    except (OSError, ValueError) as e:
        if args.format == "records":
            print(json.dumps({"error": "input", "message": str(e), "loci": []}, ensure_ascii=False))
        else:
            print(f"❌ {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:
        logger.exception("Erreur inattendue dans %s", args.command)
        if args.format == "records":
            print(json.dumps({"error": "internal", "message": str(e), "loci": []}, ensure_ascii=False))
        else:
            print(f"❌ Erreur interne: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(run_command())
