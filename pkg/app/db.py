"""
Журнал проверок в SQLite
Хранит запуски проверочных наборов и строки их отчётов
"""

import json
import sqlite3
import logging
from datetime import datetime
from typing import Dict, List, Sequence

logger = logging.getLogger(__name__)


class VerificationLedger:
    """Журнал запусков verify"""

    def __init__(self, db_path: str = "levy_verification.db"):
        self.db_path = db_path
        self.init_database()

    def init_database(self):
        """Инициализация базы данных и создание таблиц"""
        try:
            with sqlite3.connect(self.db_path) as conn:
                cursor = conn.cursor()

                # Таблица запусков
                cursor.execute("""
                    CREATE TABLE IF NOT EXISTS runs (
                        id INTEGER PRIMARY KEY AUTOINCREMENT,
                        ran_at DATETIME NOT NULL,
                        suite TEXT NOT NULL,
                        seed INTEGER NOT NULL,
                        quick BOOLEAN DEFAULT 0,
                        n_rows INTEGER DEFAULT 0,
                        n_failed INTEGER DEFAULT 0,
                        created_at DATETIME DEFAULT CURRENT_TIMESTAMP
                    )
                """)

                # Таблица строк отчёта
                cursor.execute("""
                    CREATE TABLE IF NOT EXISTS reports (
                        id INTEGER PRIMARY KEY AUTOINCREMENT,
                        run_id INTEGER NOT NULL,
                        test_name TEXT NOT NULL,
                        model TEXT NOT NULL,
                        parameters_json TEXT,
                        estimate REAL,
                        stderr REAL,
                        target REAL,
                        sigmas REAL,
                        deterministic_tol REAL,
                        passed BOOLEAN NOT NULL,
                        FOREIGN KEY (run_id) REFERENCES runs (id)
                    )
                """)

                # Индексы для выборок по запуску и по имени проверки
                cursor.execute("CREATE INDEX IF NOT EXISTS idx_reports_run_id ON reports (run_id)")
                cursor.execute("CREATE INDEX IF NOT EXISTS idx_reports_test_name ON reports (test_name)")
                cursor.execute("CREATE INDEX IF NOT EXISTS idx_runs_suite ON runs (suite)")

                conn.commit()
                logger.debug(f"Журнал проверок инициализирован: {self.db_path}")

        except Exception as e:
            logger.error(f"Ошибка инициализации журнала проверок: {e}")
            raise

    def create_run(self, suite: str, seed: int, quick: bool = False, ran_at: datetime = None) -> int:
        """Создание записи о запуске; 0 при ошибке"""
        try:
            with sqlite3.connect(self.db_path) as conn:
                cursor = conn.cursor()
                cursor.execute("""
                    INSERT INTO runs (ran_at, suite, seed, quick)
                    VALUES (?, ?, ?, ?)
                """, ((ran_at or datetime.now()).isoformat(), suite, int(seed), bool(quick)))
                conn.commit()
                return cursor.lastrowid
        except Exception as e:
            logger.error(f"Ошибка создания записи запуска: {e}")
            return 0

    def insert_reports(self, run_id: int, reports: Sequence[Dict]) -> bool:
        """Добавление строк отчёта (словари MCReport.to_dict())"""
        try:
            with sqlite3.connect(self.db_path) as conn:
                cursor = conn.cursor()
                cursor.executemany("""
                    INSERT INTO reports (run_id, test_name, model, parameters_json, estimate,
                                         stderr, target, sigmas, deterministic_tol, passed)
                    VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
                """, [
                    (run_id, r["test_name"], r["model"], json.dumps(r["parameters"], sort_keys=True),
                     r["estimate"], r["stderr"], r["target"], r["sigmas"], r["deterministic_tol"],
                     bool(r["pass"]))
                    for r in reports
                ])
                conn.commit()
                return True
        except Exception as e:
            logger.error(f"Ошибка добавления строк отчёта для запуска {run_id}: {e}")
            return False

    def finish_run(self, run_id: int, n_rows: int, n_failed: int) -> bool:
        """Итоги запуска"""
        try:
            with sqlite3.connect(self.db_path) as conn:
                cursor = conn.cursor()
                cursor.execute("""
                    UPDATE runs SET n_rows = ?, n_failed = ?
                    WHERE id = ?
                """, (n_rows, n_failed, run_id))
                conn.commit()
                return cursor.rowcount == 1
        except Exception as e:
            logger.error(f"Ошибка обновления запуска {run_id}: {e}")
            return False

    def get_run_reports(self, run_id: int) -> List[Dict]:
        """Строки отчёта одного запуска"""
        try:
            with sqlite3.connect(self.db_path) as conn:
                cursor = conn.cursor()
                cursor.execute("SELECT * FROM reports WHERE run_id = ? ORDER BY id ASC", (run_id,))
                columns = [description[0] for description in cursor.description]
                rows = [dict(zip(columns, row)) for row in cursor.fetchall()]
                for row in rows:
                    row["parameters"] = json.loads(row.pop("parameters_json") or "{}")
                    row["passed"] = bool(row["passed"])
                return rows
        except Exception as e:
            logger.error(f"Ошибка получения строк отчёта: {e}")
            return []

    def get_recent_runs(self, limit: int = 10) -> List[Dict]:
        """Последние запуски, новые первыми"""
        try:
            with sqlite3.connect(self.db_path) as conn:
                cursor = conn.cursor()
                cursor.execute("SELECT * FROM runs ORDER BY id DESC LIMIT ?", (limit,))
                columns = [description[0] for description in cursor.description]
                return [dict(zip(columns, row)) for row in cursor.fetchall()]
        except Exception as e:
            logger.error(f"Ошибка получения запусков: {e}")
            return []

    def get_failure_history(self, test_name: str) -> List[Dict]:
        """Все непрошедшие строки проверки test_name с датой запуска"""
        try:
            with sqlite3.connect(self.db_path) as conn:
                cursor = conn.cursor()
                cursor.execute("""
                    SELECT r.*, runs.ran_at, runs.suite, runs.seed
                    FROM reports r
                    JOIN runs ON r.run_id = runs.id
                    WHERE r.test_name = ? AND r.passed = 0
                    ORDER BY r.id ASC
                """, (test_name,))
                columns = [description[0] for description in cursor.description]
                return [dict(zip(columns, row)) for row in cursor.fetchall()]
        except Exception as e:
            logger.error(f"Ошибка получения истории проверки {test_name}: {e}")
            return []
