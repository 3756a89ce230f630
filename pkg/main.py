"""
feecavg - CLI Principal
Executa experimentos de projeção descritos em arquivos JSON.

Uso: uv run main.py run config.json [--output-dir DIR] [--debug]
     uv run main.py list
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from analysis import (
    ConvergenceReport, PinStore, boundary_test_forms, broken_bh_study, convergence_study,
    local_vs_global_study, weak_boundary_residual,
)
from config import ExperimentConfig, load_config
from errors import ConfigError, ExperimentAssertionError, FeecError
from feec_fields import FIELD_CATALOG, field_degree, get_field
from mesh import BOUNDARY_SELECTORS, MESH_GENERATORS, generate_mesh, load_mesh_json, mesh_sequence
from projection import make_weights, project
from vecproxy import NAMED_SPACES

logger = logging.getLogger("feecavg")

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

LOWER_BOUND_TOL = 1e-6
WEAK_BC_TOL = 1e-9
CSV_HEADER = ["level", "h_max", "norm", "space", "weights", "backend", "value", "slope"]
# constantes de diagnóstico que não são fixadas
UNPINNED = {"aligned", "hypothesis_residual"}


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    expected: float
    detail: str = ""


# ============================================================================
# EXECUÇÃO
# ============================================================================

def _meshes(cfg: ExperimentConfig):
    base = load_mesh_json(cfg.mesh_file) if cfg.mesh_file is not None else generate_mesh(cfg.mesh_name)
    meshes = mesh_sequence(base, cfg.levels)
    logger.info("Malha '%s': %d níveis, %d a %d células", cfg.mesh_name, len(meshes),
                meshes[0].num_cells, meshes[-1].num_cells)
    return meshes


def _run_study(cfg: ExperimentConfig, meshes, params, field) -> ConvergenceReport:
    if cfg.study == "convergence":
        return convergence_study(meshes, params, field, cfg.weights, cfg.backend,
                                 [n.pair for n in cfg.norms], cfg.diagnostics)
    if cfg.study == "broken_bh":
        return broken_bh_study(meshes, params, field, cfg.weights, cfg.backend,
                               require_alignment=cfg.assertions.slopes)
    return local_vs_global_study(meshes, params, field)


def _check_slopes(cfg: ExperimentConfig, report: ConvergenceReport) -> list[CheckResult]:
    checks = []
    tol = cfg.assertions.slope_tolerance
    for key, expected in report.expected_slopes.items():
        if key not in report.slopes:
            continue
        measured = report.slopes[key]
        checks.append(CheckResult(f"slope:{key}", abs(measured - expected) <= tol, measured, expected,
                                  f"tolerância ±{tol}"))
    return checks


def _check_lower_bound(report: ConvergenceReport) -> list[CheckResult]:
    return [CheckResult(f"lower_bound:level{rec.level}", rec.constants["ratio"] >= 1 - LOWER_BOUND_TOL,
                        rec.constants["ratio"], 1.0, "E₂ ≥ (Σ e²)^{1/2}")
            for rec in report.levels]


def _check_pins(cfg: ExperimentConfig, report: ConvergenceReport) -> list[CheckResult]:
    path = Path(cfg.assertions.pins)
    if not path.is_absolute() and cfg.source is not None:
        path = cfg.source.parent / path
    store = PinStore(path, cfg.assertions.pin_tolerance)
    # um valor fixado por nível: as constantes dos níveis grossos ainda não são assintóticas
    checks = []
    for rec in report.levels:
        for name, value in rec.constants.items():
            if name in UNPINNED:
                continue
            pin = store.check(f"{cfg.name}.{name}.level{rec.level}", value)
            checks.append(CheckResult(f"pin:{name}:level{rec.level}", pin.ok, value, pin.pinned,
                                      f"desvio {100 * pin.drift:.1f}%"))
    store.save()
    return checks


def _check_weak_bc(cfg: ExperimentConfig, mesh, params, field) -> list[CheckResult]:
    space = params.build(mesh)
    u = project(space, field, make_weights(cfg.weights, mesh, space.boundary), cfg.backend)
    forms = boundary_test_forms(space, count=10, seed=cfg.seed)
    residual = max((abs(weak_boundary_residual(u, eta)) for eta in forms), default=0.0)
    logger.info("Teste fraco de contorno: %d formas-teste, resíduo máximo %.3e", len(forms), residual)
    return [CheckResult("weak_bc", residual <= WEAK_BC_TOL, residual, 0.0, f"{len(forms)} formas-teste")]


def run_experiment(config_path: str, output_dir: Optional[str] = None) -> dict:
    """Executa um experimento e escreve report.json e errors.csv."""
    cfg = load_config(config_path)
    meshes = _meshes(cfg)
    n = meshes[0].n
    params = cfg.space.params(n, cfg.boundary)
    if field_degree(cfg.field, n) != params.k:
        raise ConfigError(f"campo de grau {field_degree(cfg.field, n)} para espaço de grau {params.k}",
                          field_path="field")
    if cfg.assertions.weak_bc and cfg.boundary == "none":
        raise ConfigError("teste fraco de contorno exige um seletor de fronteira", field_path="assert.weak_bc")
    field = get_field(cfg.field, n)

    report = _run_study(cfg, meshes, params, field)
    checks: list[CheckResult] = []
    if cfg.assertions.slopes:
        checks += _check_slopes(cfg, report)
    if cfg.study == "local_vs_global" and cfg.assertions.lower_bound:
        checks += _check_lower_bound(report)
    if cfg.assertions.pins:
        checks += _check_pins(cfg, report)
    if cfg.assertions.weak_bc:
        checks += _check_weak_bc(cfg, meshes[-1], params, field)

    payload = {
        "name": cfg.name,
        "study": cfg.study,
        "mesh": cfg.mesh_name,
        "seed": cfg.seed,
        "report": report.to_dict(),
        "checks": [asdict(c) for c in checks],
        "passed": all(c.passed for c in checks),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    write_outputs(cfg, report, payload, Path(output_dir) if output_dir else Path.cwd())

    failed = [c for c in checks if not c.passed]
    if failed:
        first = failed[0]
        raise ExperimentAssertionError(
            f"{len(failed)} verificação(ões) falharam; primeira: {first.name} ({first.detail})",
            measured=first.measured, expected=first.expected)
    return payload


def write_outputs(cfg: ExperimentConfig, report: ConvergenceReport, payload: dict, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / cfg.output.report
    report_path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n", encoding="utf-8")
    meta = report.metadata
    with open(out_dir / cfg.output.csv, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for rec in report.levels:
            for key, value in rec.errors.items():
                slope = report.slopes.get(key)
                writer.writerow([rec.level, f"{rec.h_max:.12g}", key, meta["space"], meta["weights"],
                                 meta["backend"], f"{value:.12e}", "" if slope is None else f"{slope:.6f}"])
    logger.info("Relatórios escritos em %s", out_dir)


# ============================================================================
# CATÁLOGO
# ============================================================================

def list_catalog() -> str:
    sections = [
        ("malhas", sorted(MESH_GENERATORS)),
        ("espaços", sorted(NAMED_SPACES)),
        ("famílias", ["P", "Pminus"]),
        ("campos", [f"{name}  ({FIELD_CATALOG[name].description})" for name in sorted(FIELD_CATALOG)]),
        ("fronteiras", sorted(BOUNDARY_SELECTORS)),
        ("estudos", ["broken_bh", "convergence", "local_vs_global"]),
    ]
    lines = []
    for title, items in sections:
        lines.append(f"{title}:")
        lines.extend(f"  {item}" for item in items)
    return "\n".join(lines)


# ============================================================================
# PONTO DE ENTRADA
# ============================================================================

def _configure_logging(debug: bool):
    logging.basicConfig(level=logging.DEBUG if debug else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def main(argv: Optional[list[str]] = None) -> int:
    """Ponto de entrada principal."""
    # Configura encoding para UTF-8 no stdout/stderr (importante para Windows)
    for stream in (sys.stdout, sys.stderr):
        if stream.encoding and stream.encoding.lower() != "utf-8":
            try:
                stream.reconfigure(encoding="utf-8")
            except (AttributeError, ValueError):
                pass

    parser = argparse.ArgumentParser(
        prog="feecavg",
        description="Projeções por médias em espaços de elementos finitos de formas diferenciais",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Exemplos:
  uv run main.py run configs/smooth_ned1_square.json
  uv run main.py run configs/kinked_lagrange.json --output-dir out/
  uv run main.py list
        """
    )
    parser.add_argument("--debug", action="store_true", help="Log detalhado e traceback em erros")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="Executa um experimento")
    run.add_argument("config", help="Arquivo JSON do experimento")
    run.add_argument("--output-dir", default=None, help="Diretório dos relatórios (padrão: diretório atual)")
    run.add_argument("--debug", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub.add_parser("list", help="Lista malhas, espaços e campos disponíveis")

    args = parser.parse_args(argv)
    _configure_logging(args.debug)

    if args.command == "list":
        print(list_catalog())
        return EXIT_OK

    try:
        payload = run_experiment(args.config, args.output_dir)
    except ConfigError as e:
        print(f"Erro: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentAssertionError as e:
        print(f"Erro: {e}", file=sys.stderr)
        return EXIT_ASSERTION
    except FeecError as e:
        if args.debug:
            logger.exception("Falha no experimento")
        print(f"Erro: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        if args.debug:
            logger.exception("Erro interno")
        print(f"Erro interno: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    for check in payload["checks"]:
        logger.info("%s: %s (medido %.4g, esperado %.4g)", check["name"],
                    "ok" if check["passed"] else "FALHOU", check["measured"], check["expected"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
