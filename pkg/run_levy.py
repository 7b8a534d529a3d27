#!/usr/bin/env python3
"""
Скрипт запуска levy-penal
Проверяет конфигурацию и передаёт аргументы командной строке
"""

import sys
import logging
from pathlib import Path

# Добавляем путь к модулям приложения
sys.path.insert(0, str(Path(__file__).parent))

from app.config import validate_config
from app.main import run

logger = logging.getLogger(__name__)


def startup_check() -> bool:
    """Проверка готовности к запуску"""
    logger.info("Проверка конфигурации...")

    try:
        validate_config()
        logger.info("✅ Конфигурация корректна")
    except ValueError as e:
        logger.error(f"❌ Ошибка конфигурации: {e}")
        return False

    if not Path("config.env").exists():
        logger.debug("config.env не найден, используются переменные окружения процесса")
    return True


def launch(argv=None) -> int:
    """Проверка и запуск; возвращает код выхода CLI"""
    if not startup_check():
        logger.error("❌ Запуск невозможен")
        return 2

    try:
        return run(argv)
    except KeyboardInterrupt:
        logger.info("🛑 Получен сигнал остановки")
        return 130
    except Exception as e:
        logger.error(f"❌ Критическая ошибка: {e}")
        return 1


if __name__ == "__main__":
    # Настройка логирования для скрипта
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    sys.exit(launch())
