from typing import Any, Dict, Optional


class PricingError(Exception):
    kind = 'error'

    def to_dict(self) -> Dict[str, Any]:
        return {'error': self.kind, 'message': str(self)}


class ConfigError(PricingError, ValueError):
    kind = 'config'


class DomainError(PricingError, ValueError):
    kind = 'domain'


class SingularDesignError(PricingError, ValueError):
    kind = 'singular'


class BudgetExceededError(PricingError, ValueError):
    kind = 'size'

    def __init__(self, message: str, cost_estimate: Optional[int] = None):
        super().__init__(message)
        self.cost_estimate = cost_estimate

    def to_dict(self) -> Dict[str, Any]:
        payload = super().to_dict()
        payload['cost_estimate'] = self.cost_estimate
        return payload


class ShapeError(PricingError, ValueError):
    kind = 'shape'


class ContractError(PricingError, RuntimeError):
    kind = 'contract'


class CsvParseError(PricingError, ValueError):
    kind = 'parse'

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message)
        self.line = line

    def to_dict(self) -> Dict[str, Any]:
        payload = super().to_dict()
        payload['line'] = self.line
        return payload


class TrainingDivergedError(PricingError, RuntimeError):
    kind = 'diverged'

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def to_dict(self) -> Dict[str, Any]:
        payload = super().to_dict()
        payload['diagnostics'] = self.diagnostics
        return payload
