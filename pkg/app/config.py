"""
Конфигурация приложения
Загружает переменные окружения и настраивает параметры расчётов
"""

import os
import logging
from dotenv import load_dotenv

# Загружаем переменные окружения
# Сначала пробуем config.env (для локальной разработки)
if os.path.exists('config.env'):
    load_dotenv('config.env')
else:
    # Если config.env нет, используем переменные окружения процесса
    pass


# Настройка логирования
def setup_logging(level: str = None):
    """Настройка системы логирования"""
    log_level = (level or os.getenv("LOG_LEVEL", "INFO")).upper()
    log_file = os.getenv("LOG_FILE", "levy_penal.log")

    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, log_level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True
    )


# Воспроизводимость
LEVY_SEED = int(os.getenv("LEVY_SEED", "20240501"))

# Журнал проверок (SQLite); пустая строка отключает
DATABASE_PATH = os.getenv("DATABASE_PATH", "levy_verification.db")

# Квадратуры
QUAD_ABS_TOL = float(os.getenv("QUAD_ABS_TOL", "1e-10"))
QUAD_REL_TOL = float(os.getenv("QUAD_REL_TOL", "1e-8"))
EXTRAP_REL_TOL = float(os.getenv("EXTRAP_REL_TOL", "1e-6"))
QUAD_MAX_SUBDIVISIONS = int(os.getenv("QUAD_MAX_SUBDIVISIONS", "2000"))

# Моделирование траекторий
SIM_DT = float(os.getenv("SIM_DT", "1e-4"))
SIM_EPS_LOCAL = float(os.getenv("SIM_EPS_LOCAL", "0.02"))
SIM_DELTA_HIT = float(os.getenv("SIM_DELTA_HIT", "0.02"))
SIM_BATCH_SIZE = int(os.getenv("SIM_BATCH_SIZE", "2000"))
SIM_WORKERS = int(os.getenv("SIM_WORKERS", "4"))

# Допуск на обрезку вероятностей до [0, 1]
PROB_CLAMP_BUDGET = float(os.getenv("PROB_CLAMP_BUDGET", "1e-6"))


# Валидация параметров
def validate_config():
    """Проверка диапазонов числовых переменных окружения"""
    positive_vars = [
        "QUAD_ABS_TOL",
        "QUAD_REL_TOL",
        "EXTRAP_REL_TOL",
        "QUAD_MAX_SUBDIVISIONS",
        "SIM_DT",
        "SIM_EPS_LOCAL",
        "SIM_DELTA_HIT",
        "SIM_BATCH_SIZE",
        "SIM_WORKERS",
        "PROB_CLAMP_BUDGET",
    ]

    bad_vars = []
    for var in positive_vars:
        if not globals()[var] > 0:
            bad_vars.append(var)

    if not 0 <= LEVY_SEED < 2 ** 64:
        bad_vars.append("LEVY_SEED")

    if bad_vars:
        raise ValueError(f"Некорректные значения переменных окружения: {', '.join(bad_vars)}")
