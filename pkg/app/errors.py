"""
Исключения предметной области
Каждое наследует LevyPenalError и ближайшее встроенное исключение
"""


class LevyPenalError(Exception):
    """Базовая ошибка расчётов"""


class ModelConfigError(LevyPenalError, ValueError):
    """Некорректное описание модели (файл или пресет)"""


class UnsupportedModel(LevyPenalError, ValueError):
    """Модель не поддерживается запрошенной операцией"""


class NonIntegrableResolvent(LevyPenalError, ValueError):
    """Интеграл ∫|1/(q+Ψ)| расходится: условие (A) не выполнено"""


class QuadratureNoConvergence(LevyPenalError, ArithmeticError):
    """Квадратура исчерпала подразбиения, не достигнув точности"""


class ExtrapolationUnstable(LevyPenalError, ArithmeticError):
    """Экстраполяция q → 0 не сошлась"""


class DegenerateDenominator(LevyPenalError, ZeroDivisionError):
    """Знаменатель формулы не превышает допуска"""


class NotTransient(LevyPenalError, ValueError):
    """Операция определена только для невозвратного процесса"""


class InvalidClock(LevyPenalError, ValueError):
    """Некорректные параметры случайных часов"""


class MissingLevelLocalTime(LevyPenalError, KeyError):
    """В состоянии нет локального времени на нужном уровне"""


class StartingPointNotInH(LevyPenalError, ValueError):
    """Начальная точка вне множества h^(γ) > 0"""


class UnnormalizedWeight(LevyPenalError, ValueError):
    """Весовая функция не нормирована"""


class HorizonExceeded(LevyPenalError, RuntimeError):
    """Часы не сработали до горизонта моделирования"""
