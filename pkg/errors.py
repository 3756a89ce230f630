"""
feecavg - Módulo de Erros
Define todas as exceções usadas pela biblioteca e pelo executor de experimentos.
"""

from dataclasses import dataclass
from typing import Optional


@dataclass
class SourceLocation:
    """Localização num arquivo de configuração."""
    line: int
    column: int
    file: str = "<config>"

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


class FeecError(Exception):
    """Classe base para todos os erros do feecavg."""

    def __init__(self, message: str, location: Optional[SourceLocation] = None):
        self.message = message
        self.location = location
        super().__init__(self.format_message())

    def format_message(self) -> str:
        if self.location:
            return f"[{self.location}] {self.message}"
        return self.message


class MeshError(FeecError):
    """Complexo simplicial inválido ou operação de malha inválida."""
    pass


class PolyFormError(FeecError):
    """Parâmetros inválidos na álgebra de formas polinomiais."""
    pass


class QuadratureError(FeecError):
    """Regra de quadratura indisponível ou integrando incompatível."""
    pass


class FESpaceError(FeecError):
    """Erro na construção ou uso de um espaço de elementos finitos."""
    pass


class UnisolvenceError(FESpaceError):
    """Matriz local de graus de liberdade singular ou mal condicionada."""

    def __init__(self, message: str, condition: float = float("inf")):
        self.condition = condition
        super().__init__(message)


class ProjectionError(FeecError):
    """Erro nas projeções locais ou na projeção por médias."""
    pass


class AnalysisError(FeecError):
    """Erro nos estudos de convergência e medições de erro."""
    pass


class ConfigError(FeecError):
    """Configuração de experimento inválida."""

    def __init__(self, message: str, location: Optional[SourceLocation] = None,
                 field_path: Optional[str] = None):
        self.field_path = field_path
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message, location)


class ExperimentAssertionError(FeecError):
    """Uma tolerância medida do experimento não foi satisfeita."""

    def __init__(self, message: str, measured: Optional[float] = None,
                 expected: Optional[float] = None):
        self.measured = measured
        self.expected = expected
        super().__init__(message)
