"""
Levy Penal
Теория потенциала процессов Леви, мартингалы пенализации и их проверка методом Монте-Карло
"""

__version__ = "1.0.0"
__author__ = "Levy Penal"
__description__ = "Функция h, вероятности достижения, пенализация по случайным часам и проверочный набор Монте-Карло"
