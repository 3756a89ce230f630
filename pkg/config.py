"""
feecavg - Configuração
Leitura e validação dos arquivos JSON de experimento.

Exemplo:
    {
      "name": "smooth_ned1_square",
      "mesh": "unit_square_2",
      "levels": 4,
      "space": {"name": "Ned1", "r": 1},
      "field": "smooth_1form",
      "norms": [{"s": 0, "p": 2}],
      "assert": {"slopes": true}
    }
"""

import json
import re
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, field_validator, model_validator

from errors import ConfigError, FESpaceError, SourceLocation
from feec_fields import FIELD_CATALOG
from fespace import Family
from mesh import BOUNDARY_SELECTORS, MESH_GENERATORS
from analysis import SLOPE_LEVELS, SpaceParams
from vecproxy import NAMED_SPACES, named_params

Study = Literal["broken_bh", "convergence", "local_vs_global"]
Diagnostic = Literal["local_vs_global", "quasi_optimality", "shape_scaling", "stability"]


def _choices(value: str, options, what: str) -> str:
    if value not in options:
        raise ValueError(f"{what} '{value}' inválido; opções: {', '.join(sorted(options))}")
    return value


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpaceConfig(_Model):
    r: int = Field(ge=1)
    name: Optional[str] = None
    family: Optional[str] = None
    k: Optional[int] = Field(default=None, ge=0, le=3)

    @field_validator("name")
    @classmethod
    def _known_name(cls, value: Optional[str]) -> Optional[str]:
        return value if value is None else _choices(value, NAMED_SPACES, "espaço")

    @field_validator("family")
    @classmethod
    def _known_family(cls, value: Optional[str]) -> Optional[str]:
        if value is None:
            return None
        try:
            return Family.parse(value).value
        except FESpaceError:
            raise ValueError(f"família '{value}' inválida; opções: P, Pminus")

    @model_validator(mode="after")
    def _name_or_family(self) -> "SpaceConfig":
        if self.name is None and (self.family is None or self.k is None):
            raise ValueError("informe 'name' ou o par 'family' e 'k'")
        if self.name is not None and (self.family is not None or self.k is not None):
            raise ValueError("'name' exclui 'family' e 'k'")
        return self

    def params(self, n: int, boundary: str) -> SpaceParams:
        if self.name is not None:
            family, k, _ = named_params(self.name, n)
            return SpaceParams(family.value, self.r, k, boundary, name=f"{self.name}_{self.r}")
        return SpaceParams(self.family, self.r, self.k, boundary)


class NormSpec(_Model):
    s: Literal[0, 1]
    p: Literal[1, 2, "inf"] = 2

    @property
    def pair(self) -> tuple[int, Union[int, str]]:
        return self.s, self.p


class AssertionConfig(_Model):
    slopes: bool = False
    slope_tolerance: float = Field(default=0.25, ge=0)
    pins: Optional[str] = None
    pin_tolerance: float = Field(default=0.2, ge=0)
    weak_bc: bool = False
    lower_bound: bool = True


class OutputConfig(_Model):
    report: str = "report.json"
    csv: str = "errors.csv"


class MeshFile(_Model):
    file: str


class ExperimentConfig(_Model):
    name: Optional[str] = None
    mesh: Union[str, MeshFile]
    levels: int = Field(ge=1)
    space: SpaceConfig
    field: str
    boundary: str = "none"
    weights: Literal["clement", "eg"] = "eg"
    backend: Literal["l2", "taylor"] = "taylor"
    norms: tuple[NormSpec, ...] = Field(default=(NormSpec(s=0, p=2),), min_length=1)
    study: Study = "convergence"
    diagnostics: tuple[Diagnostic, ...] = ()
    assertions: AssertionConfig = Field(default_factory=AssertionConfig, alias="assert")
    output: OutputConfig = Field(default_factory=OutputConfig)
    seed: int = 0

    _source: Optional[Path] = PrivateAttr(default=None)
    _base_dir: Optional[Path] = PrivateAttr(default=None)

    @field_validator("mesh")
    @classmethod
    def _known_mesh(cls, value: Union[str, MeshFile]) -> Union[str, MeshFile]:
        return _choices(value, MESH_GENERATORS, "malha") if isinstance(value, str) else value

    @field_validator("field")
    @classmethod
    def _known_field(cls, value: str) -> str:
        return _choices(value, FIELD_CATALOG, "campo")

    @field_validator("boundary")
    @classmethod
    def _known_boundary(cls, value: str) -> str:
        return _choices(value, BOUNDARY_SELECTORS, "fronteira")

    @property
    def source(self) -> Optional[Path]:
        return self._source

    @property
    def mesh_file(self) -> Optional[Path]:
        if isinstance(self.mesh, str):
            return None
        path = Path(self.mesh.file)
        return path if self._base_dir is None or path.is_absolute() else self._base_dir / path

    @property
    def mesh_name(self) -> str:
        return self.mesh if isinstance(self.mesh, str) else Path(self.mesh.file).stem


# ============================================================================
# ERROS DE VALIDAÇÃO
# ============================================================================

def _field_path(loc: tuple) -> str:
    # rótulos de variantes de Union não fazem parte do caminho
    parts = [p for p in loc if p not in ("str", "MeshFile")]
    path = ""
    for part in parts:
        path += f"[{part}]" if isinstance(part, int) else (f".{part}" if path else str(part))
    return path


def _key_location(text: str, loc: tuple, filename: str) -> Optional[SourceLocation]:
    """Linha da chave apontada por loc, percorrendo as chaves em sequência no texto."""
    pos, found, index = 0, None, 0
    for part in loc:
        if isinstance(part, int):
            index = part
            continue
        if part in ("str", "MeshFile"):
            continue
        pattern = re.compile(r'"' + re.escape(part) + r'"\s*:')
        match = None
        for _ in range(index + 1):
            match = pattern.search(text, match.end() if match else pos)
            if match is None:
                break
        index = 0
        if match is None:
            break
        pos, found = match.end(), match.start()
    if found is None:
        return None
    line = text.count("\n", 0, found) + 1
    column = found - text.rfind("\n", 0, found)
    return SourceLocation(line, column, filename)


_MESSAGES = {
    "extra_forbidden": "chave desconhecida",
    "missing": "chave obrigatória ausente",
    "model_type": "esperado objeto",
    "int_type": "esperado inteiro",
    "float_type": "esperado número",
    "bool_type": "esperado booleano",
    "string_type": "esperado texto",
    "tuple_type": "esperada lista",
    "too_short": "esperada lista não vazia",
    "greater_than_equal": "valor deve ser ≥ {ge}",
    "less_than_equal": "valor deve ser ≤ {le}",
}


def _message(error: dict) -> str:
    kind = error["type"]
    ctx = error.get("ctx", {})
    if kind == "literal_error":
        return f"valor {error['input']!r} inválido; opções: {ctx.get('expected', '')}"
    if kind == "value_error" and "error" in ctx:
        return str(ctx["error"])
    if kind in _MESSAGES:
        return _MESSAGES[kind].format(**ctx)
    return error["msg"]


def _config_error(exc: ValidationError, text: str, filename: str) -> ConfigError:
    error = exc.errors()[0]
    loc = tuple(error["loc"])
    location = _key_location(text, loc, filename) if loc else SourceLocation(1, 1, filename)
    return ConfigError(_message(error), location, field_path=_field_path(loc) or None)


def parse_config(text: str, filename: str = "<config>", base_dir: Optional[Path] = None) -> ExperimentConfig:
    try:
        json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"JSON inválido: {e.msg}", SourceLocation(e.lineno, e.colno, filename))
    try:
        # modo estrito: true não vale como inteiro e números não viram texto
        cfg = ExperimentConfig.model_validate_json(text, strict=True)
    except ValidationError as e:
        raise _config_error(e, text, filename)
    if cfg.assertions.slopes and cfg.levels < SLOPE_LEVELS:
        raise ConfigError(f"inclinações exigem ≥ {SLOPE_LEVELS} níveis, recebido levels={cfg.levels}",
                          _key_location(text, ("assert", "slopes"), filename), field_path="assert.slopes")
    if cfg.name is None:
        cfg = cfg.model_copy(update={"name": Path(filename).stem})
    cfg._source = Path(filename) if filename != "<config>" else None
    cfg._base_dir = base_dir
    return cfg


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Não foi possível ler '{path}': {e.strerror}")
    return parse_config(text, str(path), path.parent)
