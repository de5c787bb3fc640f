"""Command-line entry points for the workbench.

Every agent is reachable both through `svw serve` (REST + UI) and through a
direct verb that runs the same pipeline against local files.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import hdl
from .agents import bugvalidate
from .knowledge import build_stores_from_manifest
from .pipeline import Workbench

DATA_DIR_OPTION = click.option(
    "--data-dir", default="./svw_data", show_default=True,
    help="Session/artifact store directory (also SVW_DATA_DIR).",
    envvar="SVW_DATA_DIR",
)


def _echo_event(event: dict) -> None:
    kind = event.get("type")
    if kind in ("step", "step_progress"):
        click.echo(f"[{event['status']}] {event['step']}")
    elif kind == "needs_input":
        click.echo("needs input:")
        for req in event.get("requirements", []):
            click.echo(f"  - {req['name']}: {req['description']}")
    elif kind == "artifact_ready":
        ref = event["artifact"]
        click.echo(f"artifact ready: {ref['filename']} ({ref['artifact_id']})")
    elif kind == "answer":
        click.echo(event.get("text", ""))
    elif kind == "error":
        click.echo(f"error: {event.get('error')}", err=True)


def _run_task(data_dir: str, text: str, files: dict[str, Path], inputs: dict | None = None,
              config: dict | None = None) -> dict:
    bench = Workbench(data_dir)
    session = bench.create_session(config or {})
    attachment_ids = []
    for _, path in files.items():
        ref = bench.upload(path.name, path.read_bytes())
        attachment_ids.append(ref.artifact_id)
    terminal = bench.handle_message(
        session.session_id, text, attachment_ids, inputs or {}, on_event=_echo_event
    )
    # answer interactively while the pipeline asks for more input
    while terminal.get("type") == "needs_input" and sys.stdin.isatty():
        answers = {}
        for req in terminal.get("requirements", []):
            answers[req["name"]] = click.prompt(req["description"])
        terminal = bench.handle_message(
            session.session_id, "(answers supplied)", [], answers, on_event=_echo_event
        )
    return terminal


@click.group()
def main():
    """Agentic SoC security-verification workbench."""


@main.command()
@click.option("--port", default=8000, show_default=True, envvar="SVW_PORT")
@click.option("--host", default="127.0.0.1", show_default=True)
@DATA_DIR_OPTION
def serve(port: int, host: str, data_dir: str):
    """Run the REST service (loopback by default)."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(data_dir), host=host, port=port)


@main.command()
@click.argument("question")
@DATA_DIR_OPTION
def ask(question: str, data_dir: str):
    """Ask the security verification chat agent a question."""
    _run_task(data_dir, question, {})


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, path_type=Path))
@DATA_DIR_OPTION
def assets(spec_path: Path, data_dir: str):
    """Identify security assets from an SoC specification document."""
    _run_task(data_dir, "Identify the security assets in this specification.",
              {"spec_document": spec_path})


@main.command("threat-model")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--assets", "assets_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--answers", "answers_path", type=click.Path(exists=True, path_type=Path),
              help="JSON file of dialogue answers for non-interactive runs.")
@DATA_DIR_OPTION
def threat_model(spec_path: Path, assets_path: Path, answers_path: Path | None, data_dir: str):
    """Build a threat model and security test plan."""
    inputs = json.loads(answers_path.read_text()) if answers_path else {}
    _run_task(data_dir, "Develop a threat model and test plan for this design.",
              {"spec_document": spec_path, "asset_json": assets_path}, inputs=inputs)


@main.command()
@click.option("--rtl", "rtl_path", required=True, type=click.Path(exists=True, path_type=Path))
@DATA_DIR_OPTION
def detect(rtl_path: Path, data_dir: str):
    """Detect security vulnerabilities in an RTL design."""
    _run_task(data_dir, "Detect security vulnerabilities in this design.",
              {"rtl_design": rtl_path})


@main.command("validate-bug")
@click.option("--rtl", "rtl_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--bug-report", "bug_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--adapter", default="mock", show_default=True,
              help="Simulator adapter id (mock replays $SVW_MOCK_TRACES).")
@DATA_DIR_OPTION
def validate_bug(rtl_path: Path, bug_path: Path, adapter: str, data_dir: str):
    """Validate a reported security bug by simulation."""
    _run_task(data_dir, "Validate this security bug in simulation.",
              {"rtl_design": rtl_path, "bug_report": bug_path},
              inputs={"adapter": adapter})


@main.command("gen-properties")
@click.option("--rtl", "rtl_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--threats", required=True, help="Comma-separated threat vectors.")
@DATA_DIR_OPTION
def gen_properties(rtl_path: Path, threats: str, data_dir: str):
    """Generate security properties and SVAs for an RTL design."""
    _run_task(data_dir, "Generate security properties for this design.",
              {"rtl_design": rtl_path}, inputs={"threat_vectors": threats})


@main.command("check-sva")
@click.argument("sva_file", type=click.Path(exists=True, path_type=Path))
@click.option("--design", "design_path", type=click.Path(exists=True, path_type=Path),
              help="RTL file whose signal table the assertions must resolve against.")
def check_sva(sva_file: Path, design_path: Path | None):
    """Check an .sva file against the supported assertion subset."""
    table = hdl.parse_ports(design_path.read_text()) if design_path else None
    results = hdl.check_sva_file(sva_file.read_text(), table)
    failures = 0
    for i, result in enumerate(results):
        if result.ok:
            click.echo(f"{sva_file}: assertion {i + 1}: ok")
        else:
            failures += 1
            for diag in result.diagnostics:
                click.echo(diag.format(str(sva_file)))
    if not results:
        click.echo(f"{sva_file}: no assertions found", err=True)
        raise SystemExit(1)
    raise SystemExit(1 if failures else 0)


@main.command("build-store")
@click.option("--manifest", required=True, type=click.Path(exists=True, path_type=Path),
              help="JSON list of {path, domain_label} records.")
@click.option("--out", "out_dir", default="./svw_data/stores", show_default=True,
              type=click.Path(path_type=Path))
def build_store_cmd(manifest: Path, out_dir: Path):
    """Build knowledge vector stores from a document manifest."""
    stores = build_stores_from_manifest(manifest, out_dir)
    for store in stores:
        click.echo(f"built store {store.store_id!r} ({len(store)} chunks) -> {out_dir}")


@main.command("validate-rate")
@click.argument("verdict_files", nargs=-1, type=click.Path(exists=True, path_type=Path))
def validate_rate(verdict_files):
    """Bug-validated rate over a batch of verdict JSON artifacts."""
    verdicts = []
    for path in verdict_files:
        data = json.loads(path.read_text())
        verdicts.append(bugvalidate.Verdict.from_dict(data))
    rate = bugvalidate.validation_rate(verdicts)
    click.echo(f"validated {rate} ({rate.fraction})")


if __name__ == "__main__":
    main()
