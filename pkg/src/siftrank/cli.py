"""Command-line client for the ranking service.

Every command builds a service request and posts it over HTTP: against a
remote server when ``--server-url`` is given, otherwise against the
in-process application, so offline runs need no running server. API keys
are only ever read from the environment of the process doing the ranking.
"""

from __future__ import annotations

import asyncio
import csv
import io
import json
from pathlib import Path

import click
import httpx

from .service.app import create_app


def _read_corpus(path: Path) -> list[dict]:
    """Parse a corpus file: JSON-lines with a ``text`` field, or bare lines."""
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise click.ClickException(f"cannot read {path}: {exc}")
    lines = raw.splitlines()
    first = next((line for line in lines if line.strip()), "")
    jsonl = first.lstrip().startswith("{")
    documents = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if jsonl:
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise click.ClickException(f"{path}:{lineno}: invalid JSON ({exc.msg})")
            if not isinstance(row, dict) or not isinstance(row.get("text"), str) \
                    or not row["text"]:
                raise click.ClickException(
                    f"{path}:{lineno}: expected an object with a non-empty 'text' field"
                )
            doc = {"text": row["text"]}
            if "id" in row and row["id"] is not None:
                doc["id"] = str(row["id"])
            documents.append(doc)
        else:
            documents.append({"id": str(lineno), "text": line.strip()})
    if not documents:
        raise click.ClickException(f"{path}: no documents found")
    return documents


def _read_lines(path: Path) -> list[str]:
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise click.ClickException(f"cannot read {path}: {exc}")
    return [line.strip() for line in raw.splitlines() if line.strip()]


def _read_edges(path: Path) -> list[list[str]]:
    edges = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise click.ClickException(
                f"{path}:{lineno}: expected 'caller callee', got {line!r}"
            )
        edges.append(parts)
    return edges


def _post(server_url: str | None, path: str, payload: dict) -> dict:
    if server_url:
        try:
            with httpx.Client(base_url=server_url, timeout=None) as client:
                response = client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise click.ClickException(f"cannot reach {server_url}: {exc}")
    else:
        async def call() -> httpx.Response:
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://siftrank",
                                         timeout=None) as client:
                return await client.post(path, json=payload)

        response = asyncio.run(call())
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise click.ClickException(f"service returned {response.status_code}: {detail}")
    return response.json()


def _write_output(text: str, output: Path | None) -> None:
    if output is None:
        click.echo(text, nl=False)
    else:
        output.write_text(text, encoding="utf-8")


@click.group()
def main():
    """Rank large corpora with batched stochastic trials; triage call graphs."""


@main.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--query", "query_text", help="Ranking query text.")
@click.option("--query-file", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Read the ranking query from a file.")
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path),
              help="Write the run report here (default: stdout).")
@click.option("-s", "--batch-size", default=10, show_default=True)
@click.option("-t", "--max-trials", default=50, show_default=True)
@click.option("-w", "--window", default=5, show_default=True,
              help="Consecutive agreeing trials required for convergence.")
@click.option("--statistic", type=click.Choice(["mean", "median"]), default="mean",
              show_default=True)
@click.option("--inflection", type=click.Choice(["elbow", "gap"]), default="elbow",
              show_default=True)
@click.option("--tolerance", default=0, show_default=True,
              help="Allowed wobble between windowed inflection indices.")
@click.option("--seed", default=0, show_default=True)
@click.option("--concurrency", default=8, show_default=True)
@click.option("--model", default="gpt-5-nano", show_default=True)
@click.option("--base-url", default="https://api.openai.com/v1", show_default=True)
@click.option("--api-key-env", default="OPENAI_API_KEY", show_default=True,
              help="Environment variable holding the API key.")
@click.option("--ranker", type=click.Choice(["llm", "oracle"]), default="llm",
              show_default=True)
@click.option("--oracle-order", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Ground-truth order file for the oracle ranker, best first.")
@click.option("--noise", type=click.Choice(["none", "adjacent_swap", "uniform_shuffle_prob"]),
              default="none", show_default=True, help="Oracle noise model.")
@click.option("--noise-param", default=0.0, show_default=True)
@click.option("--noise-seed", default=0, show_default=True)
@click.option("--summarize", is_flag=True, help="Summarize documents before ranking.")
@click.option("--reasoning", is_flag=True,
              help="Ask the model to explain each batch ordering.")
@click.option("--max-requests", type=int, default=None,
              help="Abort before exceeding this many ranker calls.")
@click.option("--retry-limit", default=3, show_default=True)
@click.option("--server-url", default=None, help="Use a running service instead of in-process.")
def rank(input_path, query_text, query_file, output, batch_size, max_trials, window,
         statistic, inflection, tolerance, seed, concurrency, model, base_url,
         api_key_env, ranker, oracle_order, noise, noise_param, noise_seed,
         summarize, reasoning, max_requests, retry_limit, server_url):
    """Rank the documents in INPUT_PATH against a query."""
    if bool(query_text) == bool(query_file):
        raise click.UsageError("provide exactly one of --query or --query-file")
    if query_file:
        query_text = query_file.read_text(encoding="utf-8").strip()
    if not query_text:
        raise click.ClickException("query is empty")
    documents = _read_corpus(input_path)

    payload = {
        "documents": documents,
        "query": query_text,
        "options": {
            "batch_size": batch_size,
            "max_trials": max_trials,
            "stability_window": window,
            "statistic": statistic,
            "inflection_method": inflection,
            "inflection_tolerance": tolerance,
            "concurrency": concurrency,
            "rng_seed": seed,
            "retry_limit": retry_limit,
        },
        "ranker": ranker,
        "summarize": summarize,
        "max_requests": max_requests,
    }
    if ranker == "oracle":
        if not oracle_order:
            raise click.UsageError("--ranker oracle requires --oracle-order")
        payload["oracle"] = {
            "order": _read_lines(oracle_order),
            "noise": {"kind": noise, "parameter": noise_param, "rng_seed": noise_seed},
        }
    else:
        payload["llm"] = {
            "model": model,
            "base_url": base_url,
            "api_key_env": api_key_env,
            "capture_reasoning": reasoning,
        }

    report = _post(server_url, "/rank", payload)
    _write_output(json.dumps(report, indent=2, ensure_ascii=False) + "\n", output)
    iterations = report["iterations"]
    usage = report["usage"]
    click.echo(
        f"ranked {len(report['ranking'])} documents in {len(iterations)} iterations, "
        f"{usage['requests']} ranker calls, {report['wall_time_seconds']}s",
        err=True,
    )


@main.command()
@click.argument("report_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--graph", "graph_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Call-graph edge list, one 'caller callee' per line.")
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path),
              help="Write the cluster table here (default: stdout).")
@click.option("--changed", "changed_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Changed-function list; lets functions absent from the "
                   "edge list form singleton clusters.")
@click.option("--survivors-only/--all-chains", default=True, show_default=True,
              help="Drop chains eliminated in the first iteration.")
@click.option("--diameters", default="1,2,3", show_default=True,
              help="Comma-separated diameter bounds to pool.")
@click.option("--server-url", default=None, help="Use a running service instead of in-process.")
def cluster(report_path, graph_path, output, changed_path, survivors_only,
            diameters, server_url):
    """Build and score call-graph clusters from a ranked-chains report."""
    try:
        report = json.loads(report_path.read_text(encoding="utf-8"))
        rows = [
            {"id": row["id"], "rank": row["rank"], "iterations": row["iterations"]}
            for row in report["ranking"]
        ]
    except (ValueError, KeyError, TypeError) as exc:
        raise click.ClickException(f"{report_path} is not a rank report: {exc}")
    try:
        bounds = [int(part) for part in diameters.split(",") if part.strip()]
    except ValueError:
        raise click.ClickException(f"invalid --diameters value {diameters!r}")

    payload = {
        "chains": rows,
        "edges": _read_edges(graph_path),
        "nodes": _read_lines(changed_path) if changed_path else [],
        "survivors_only": survivors_only,
        "diameters": bounds,
    }
    response = _post(server_url, "/cluster", payload)
    for warning in response["warnings"]:
        click.echo(f"warning: {warning}", err=True)

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["rank", "seed", "diameter", "size", "mass", "density", "score"])
    for row in response["clusters"]:
        writer.writerow([
            row["rank"], row["seed"], row["diameter"], row["size"],
            f"{row['mass']:.6g}", f"{row['density']:.6g}", f"{row['score']:.6g}",
        ])
    _write_output(buffer.getvalue(), output)
    click.echo(f"{len(response['clusters'])} clusters", err=True)


@main.command()
@click.option("--graph", "graph_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--changed", "changed_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Changed-function list, one id per line.")
@click.option("--summaries", "summaries_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON-lines of {'id':..., 'text':...} function summaries.")
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path),
              help="Write the chain corpus here (default: stdout).")
@click.option("--server-url", default=None, help="Use a running service instead of in-process.")
def chains(graph_path, changed_path, summaries_path, output, server_url):
    """Emit a rankable chain corpus (JSON-lines) from a call graph."""
    summaries = None
    if summaries_path:
        summaries = {}
        for lineno, line in enumerate(_read_lines(summaries_path), start=1):
            try:
                row = json.loads(line)
                summaries[str(row["id"])] = str(row["text"])
            except (ValueError, KeyError, TypeError):
                raise click.ClickException(
                    f"{summaries_path}:{lineno}: expected {{'id':..., 'text':...}}"
                )
    payload = {
        "edges": _read_edges(graph_path),
        "changed": _read_lines(changed_path),
        "summaries": summaries,
    }
    response = _post(server_url, "/chains", payload)
    lines = [
        json.dumps({"id": c["id"], "text": c["text"]}, ensure_ascii=False)
        for c in response["chains"]
    ]
    _write_output("\n".join(lines) + "\n", output)
    click.echo(f"{len(lines)} chains", err=True)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the ranking service."""
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
