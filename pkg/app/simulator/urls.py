from django.urls import path, include
from rest_framework.routers import DefaultRouter
from .views import ScenarioRunViewSet

app_name = 'simulator'

router = DefaultRouter()
router.register(r'runs', ScenarioRunViewSet, basename='run')

urlpatterns = [
    path('', include(router.urls)),
]
