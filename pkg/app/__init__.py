"""
Poinçon - Prédiction de courbes contrainte-déformation vraies
à partir de courbes charge-déplacement d'essais de poinçonnement (SPT).
"""

__version__ = "1.0.0"
